//! Monitoring verdicts shared by all monitoring routines.

use crate::hypothesis::TestOutcome;
use serde::{Deserialize, Serialize};

/// Method tags as they appear on the command line.
pub mod method_tag {
    pub const CELL_T: &str = "m1";
    pub const PREDICTED_Z: &str = "m2-z";
    pub const PREDICTED_T2: &str = "m2-t2";
    pub const SAME_GROUP: &str = "m3-same";
    pub const UNKNOWN_GROUP: &str = "m3-unknown";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Unchanged,
    Changed,
}

/// One named hypothesis test inside a verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureTest {
    pub feature: String,
    pub outcome: TestOutcome,
}

/// One parameter's interval check inside a voting verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamVote {
    pub parameter: String,
    pub query_mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub rejected: bool,
}

/// What a verdict was decided on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Evidence {
    /// Hypothesis tests; the decision is "changed" when any rejects.
    Tests(Vec<FeatureTest>),
    /// Interval votes; the decision is "changed" when more than
    /// `vote_cap` of them reject.
    Votes {
        votes: Vec<ParamVote>,
        vote_cap: usize,
    },
}

/// Outcome of one monitoring run on one cell or group set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub method: String,
    pub cell: String,
    pub decision: Decision,
    pub evidence: Evidence,
}

impl MonitorVerdict {
    pub fn from_tests(method: &str, cell: String, tests: Vec<FeatureTest>) -> MonitorVerdict {
        let mut v = MonitorVerdict {
            method: method.to_string(),
            cell,
            decision: Decision::Unchanged,
            evidence: Evidence::Tests(tests),
        };
        v.decision = v.decision_from_evidence();
        v
    }

    pub fn from_votes(
        method: &str,
        cell: String,
        votes: Vec<ParamVote>,
        vote_cap: usize,
    ) -> MonitorVerdict {
        let mut v = MonitorVerdict {
            method: method.to_string(),
            cell,
            decision: Decision::Unchanged,
            evidence: Evidence::Votes { votes, vote_cap },
        };
        v.decision = v.decision_from_evidence();
        v
    }

    /// Recomputes the decision from the stored evidence; always equals
    /// `self.decision`.
    pub fn decision_from_evidence(&self) -> Decision {
        let changed = match &self.evidence {
            Evidence::Tests(tests) => tests.iter().any(|t| t.outcome.reject_null),
            Evidence::Votes { votes, vote_cap } => {
                votes.iter().filter(|v| v.rejected).count() > *vote_cap
            }
        };
        if changed {
            Decision::Changed
        } else {
            Decision::Unchanged
        }
    }

    pub fn changed(&self) -> bool {
        self.decision == Decision::Changed
    }
}
