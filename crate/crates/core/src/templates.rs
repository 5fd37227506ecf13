//! Prompt templates for the lead agent and the synthesis agents.
//!
//! The defaults are compiled in from `templates/*.txt`; a directory with
//! files of the same names overrides them one by one. Placeholders are
//! `{task}`, `{subtasks}` and `{outputs}`.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub lead_assign: String,
    pub lead_reconcile: String,
    pub merge: String,
    pub arbiter: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            lead_assign: include_str!("../templates/lead_assign.txt").to_owned(),
            lead_reconcile: include_str!("../templates/lead_reconcile.txt").to_owned(),
            merge: include_str!("../templates/merge.txt").to_owned(),
            arbiter: include_str!("../templates/arbiter.txt").to_owned(),
        }
    }
}

impl Templates {
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("lead_assign.txt", &mut t.lead_assign),
            ("lead_reconcile.txt", &mut t.lead_reconcile),
            ("merge.txt", &mut t.merge),
            ("arbiter.txt", &mut t.arbiter),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }
}

pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_owned();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
