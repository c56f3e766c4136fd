//! The bundled three-field form world and its two demonstrations.
//!
//! Trace A fills `name`, `gate`, `date` in order. Trace B fills `gate`
//! first, then `name`, then `date`. Both end by clicking `submit`. In both
//! traces `name` and `gate` precede `date`, so the summarized ordering makes
//! `date` wait for `name`, while `name` and `gate` stay unordered.

use crate::recorder::{DemoScript, RawStep};
use crate::sim::{ElementKind, ElementSpec, PageSpec, WorldSpec};

pub const TASK_LABEL: &str = "book visit";

pub fn form_world() -> WorldSpec {
    let field = |id: &str| {
        let mut e = ElementSpec::new(id, id, ElementKind::TextField);
        e.required = true;
        e
    };
    let mut submit = ElementSpec::new("submit", "submit", ElementKind::Button);
    submit.submits = true;
    WorldSpec {
        pages: vec![PageSpec {
            page_id: "form".into(),
            elements: vec![field("name"), field("gate"), field("date"), submit],
            nav_links: Default::default(),
        }],
        start_page: "form".into(),
    }
}

fn script(fills: &[(&str, &str)]) -> DemoScript {
    let mut steps: Vec<RawStep> = fills.iter().map(|(f, v)| RawStep::type_text(f, v)).collect();
    steps.push(RawStep::click("submit"));
    DemoScript {
        task_label: TASK_LABEL.into(),
        steps,
    }
}

pub fn script_a() -> DemoScript {
    script(&[("name", "Bob"), ("gate", "A12"), ("date", "2025-06-01")])
}

pub fn script_b() -> DemoScript {
    script(&[("gate", "C3"), ("name", "Carol"), ("date", "2025-06-15")])
}

/// Fresh task inputs never seen in either demonstration.
pub fn fresh_inputs() -> Vec<(String, String)> {
    [("name", "Alice"), ("gate", "B7"), ("date", "2025-07-04")]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub const CART_TASK_LABEL: &str = "order items";

/// A single-page cart where each item is typed and then added.
pub fn cart_world() -> WorldSpec {
    let mut checkout = ElementSpec::new("checkout", "checkout", ElementKind::Button);
    checkout.submits = true;
    WorldSpec {
        pages: vec![PageSpec {
            page_id: "cart".into(),
            elements: vec![
                ElementSpec::new("item", "item", ElementKind::TextField),
                ElementSpec::new("add", "add", ElementKind::Button),
                checkout,
            ],
            nav_links: Default::default(),
        }],
        start_page: "cart".into(),
    }
}

/// Adds `items` one by one, then checks out.
pub fn cart_script(items: &[&str]) -> DemoScript {
    let mut steps = Vec::new();
    for item in items {
        steps.push(RawStep::type_text("item", item));
        steps.push(RawStep::click("add"));
    }
    steps.push(RawStep::click("checkout"));
    DemoScript {
        task_label: CART_TASK_LABEL.into(),
        steps,
    }
}
