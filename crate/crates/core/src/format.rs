//! Display formatting shared by templates and prompts.

/// Probability as a percentage with exactly two decimals: `0.5992` → `59.92%`.
pub fn percent(p: f64) -> String {
    format!("{:.2}%", p * 100.0)
}

/// Shortest decimal form of a number: `47.0` → `47`, `7.5` → `7.5`.
pub fn number(x: f64) -> String {
    format!("{x}")
}

/// English list: `a`, `a and b`, `a, b, and c`.
pub fn join_list<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [a, b] => format!("{} and {}", a.as_ref(), b.as_ref()),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{}, and {}", head.join(", "), last.as_ref())
        }
    }
}
