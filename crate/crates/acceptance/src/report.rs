use std::fmt;

/// One measurable requirement inside a criterion.
#[derive(Debug, Clone)]
pub struct Clause {
    pub label: String,
    pub pass: bool,
    /// Failure is expected and documented; it does not fail the run.
    pub known: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Criterion {
    pub name: &'static str,
    /// Supplementary checks print like criteria but are labelled as such.
    pub primary: bool,
    pub clauses: Vec<Clause>,
}

impl Criterion {
    pub fn new(name: &'static str) -> Self {
        Criterion { name, primary: true, clauses: Vec::new() }
    }

    pub fn supplementary(name: &'static str) -> Self {
        Criterion { name, primary: false, clauses: Vec::new() }
    }

    pub fn check(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) -> &mut Self {
        self.clauses.push(Clause { label: label.into(), pass, known: false, detail: detail.into() });
        self
    }

    /// A clause recorded as unattainable: printed and reported, never hidden.
    pub fn check_known(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) -> &mut Self {
        self.clauses.push(Clause { label: label.into(), pass, known: true, detail: detail.into() });
        self
    }

    /// Records an error from the code under test as a failed clause.
    pub fn error(&mut self, label: impl Into<String>, e: impl fmt::Display) -> &mut Self {
        self.check(label, false, format!("error: {e}"))
    }

    pub fn pass(&self) -> bool {
        !self.clauses.is_empty() && self.clauses.iter().all(|c| c.pass)
    }

    /// True when every failing clause is a known one.
    pub fn only_known_failures(&self) -> bool {
        !self.clauses.is_empty() && self.clauses.iter().all(|c| c.pass || c.known)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass() { "PASS" } else { "FAIL" };
        let kind = if self.primary { "" } else { " (supplementary)" };
        let known = if !self.pass() && self.only_known_failures() { " [known]" } else { "" };
        writeln!(f, "{status}  {}{kind}{known}", self.name)?;
        for c in &self.clauses {
            let mark = match (c.pass, c.known) {
                (true, _) => "ok  ",
                (false, true) => "KNOWN",
                (false, false) => "FAIL",
            };
            writeln!(f, "      {mark} {}: {}", c.label, c.detail)?;
        }
        Ok(())
    }
}
