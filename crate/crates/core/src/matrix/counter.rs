use std::collections::BTreeMap;

/// Counts multiply-add operations, broken down by stage label.
///
/// Each worker owns its own counter; the orchestrator merges them at the end,
/// so totals are independent of thread timing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopCounter {
    total: u64,
    by_stage: BTreeMap<String, u64>,
    stage: String,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the label that subsequent `add` calls are attributed to.
    pub fn set_stage(&mut self, stage: &str) {
        if self.stage != stage {
            self.stage = stage.to_string();
        }
    }

    pub fn stage(&self) -> &str {
        &self.stage
    }

    #[inline]
    pub fn add(&mut self, multiply_adds: u64) {
        if multiply_adds == 0 {
            return;
        }
        self.total += multiply_adds;
        *self.by_stage.entry(self.stage.clone()).or_insert(0) += multiply_adds;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn stage_total(&self, stage: &str) -> u64 {
        self.by_stage.get(stage).copied().unwrap_or(0)
    }

    pub fn by_stage(&self) -> &BTreeMap<String, u64> {
        &self.by_stage
    }

    pub fn merge(&mut self, other: &FlopCounter) {
        self.total += other.total;
        for (k, v) in &other.by_stage {
            *self.by_stage.entry(k.clone()).or_insert(0) += v;
        }
    }

    /// `stage,multiply_adds` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,multiply_adds\n");
        for (k, v) in &self.by_stage {
            let label = if k.is_empty() { "unlabeled" } else { k };
            out.push_str(&format!("{label},{v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_additive() {
        let mut a = FlopCounter::new();
        a.set_stage("SBR");
        a.add(10);
        let mut b = FlopCounter::new();
        b.set_stage("SBR");
        b.add(5);
        b.set_stage("BC");
        b.add(7);
        a.merge(&b);
        assert_eq!(a.total(), 22);
        assert_eq!(a.stage_total("SBR"), 15);
        assert_eq!(a.stage_total("BC"), 7);
        assert!(a.to_csv().contains("BC,7"));
    }
}
