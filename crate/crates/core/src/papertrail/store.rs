use std::path::Path;

use crate::lowlevel::{Finding, Status};

use super::PaperError;

/// Findings with their full status history, kept as JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FindingStore {
    findings: Vec<Finding>,
}

impl FindingStore {
    pub fn new(findings: Vec<Finding>) -> Self {
        FindingStore { findings }
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn into_findings(self) -> Vec<Finding> {
        self.findings
    }

    pub fn get(&self, id: u64) -> Option<&Finding> {
        self.findings.iter().find(|f| f.id == id)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PaperError> {
        let findings = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| PaperError::Format { line: i + 1, message: e.to_string() }))
            .collect::<Result<_, _>>()?;
        Ok(FindingStore { findings })
    }

    pub fn to_jsonl(&self) -> String {
        self.findings.iter().map(|f| serde_json::to_string(f).expect("finding serializes") + "\n").collect()
    }

    pub fn load(path: &Path) -> Result<Self, PaperError> {
        let text = std::fs::read_to_string(path).map_err(|e| PaperError::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), PaperError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| PaperError::io(path, e))
    }

    /// Moves finding `id` to `to`, recording the note and feedback iteration.
    pub fn manage_finding(&mut self, id: u64, to: Status, note: &str, iteration: u32) -> Result<&Finding, PaperError> {
        let f = self.findings.iter_mut().find(|f| f.id == id).ok_or(PaperError::UnknownFinding(id))?;
        f.transition(to, iteration, note)?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowlevel::Severity;

    fn store() -> FindingStore {
        let mut f = Finding::new("R022", Severity::Warning, vec!["S!B2".into()], "constant 1.07 in formula");
        f.id = 1;
        FindingStore::new(vec![f])
    }

    #[test]
    fn lifecycle() {
        let mut s = store();
        assert!(matches!(s.manage_finding(1, Status::Verified, "", 2), Err(PaperError::Transition(_))));
        assert_eq!(s.manage_finding(1, Status::Corrected, "moved to inputs", 2).unwrap().status, Status::Corrected);
        assert_eq!(s.manage_finding(1, Status::Verified, "checked", 3).unwrap().status, Status::Verified);
        assert!(matches!(s.manage_finding(9, Status::Waived, "", 1), Err(PaperError::UnknownFinding(9))));
        let back = FindingStore::from_jsonl(&s.to_jsonl()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get(1).unwrap().history.len(), 2);
    }
}
