use serde::{Deserialize, Serialize};

use crate::rule::Rule;

const SYSTEM: &str = "\
You write test data for validation rules expressed as propositional constraints over record variables. \
Work through the following steps.
Step 1: Be exact. Every value you produce must follow the rule text literally.
Step 2: Find the variables the rule reads and produce three assignments of values to them: \
a satisfying_case in which the condition holds and the constraint is met, \
a violating_case in which the condition holds but the constraint is broken, \
and an invalid_case in which the condition does not hold, so the rule does not apply.
Step 3: Do not repeat yourself and do not add further cases.
Step 4: Rate how confident you are in the three cases as confidence_score.
Step 5: Reply with one JSON object and nothing else. It has exactly the keys \
satisfying_case, violating_case, invalid_case and confidence_score; each case is a flat object \
mapping variable names to values, and dates are written as YYYY-MM-DD.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    /// The provider takes a single text instead of separate system and user parts.
    pub combined: bool,
}

impl Prompt {
    /// The text sent to a provider that takes a single prompt.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

pub fn build_prompt(rule: &Rule, combined: bool) -> Prompt {
    let mut user = String::from("Generate the satisfying_case, violating_case and invalid_case for this rule:\n");
    user.push_str(&rule.text());
    Prompt { system: SYSTEM.to_string(), user, combined }
}
