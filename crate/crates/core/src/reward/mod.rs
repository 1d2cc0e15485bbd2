//! Student and teacher rewards.
//!
//! Student: `R_S = r_sfm + r_cmp + r_acc` with a strict gate chain
//! (format, then compile, then tests). Teacher:
//! `R_G = r_pfm + r_eqv + r_dvg + r_nvt + r_adv`, where every component after
//! `r_eqv` is zero unless the revision is well-formed, complete and
//! equivalent to its kernel.

mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{ParsedResponse, ProblemStructure};
use crate::judge::{Aggregate, VerdictReport};
use crate::similarity::TfidfModel;

pub use oracle::{
    parse_equivalence_reply, EquivalenceChecker, EquivalenceJudgment, Oracle, OracleError, RemoteOracle,
    StubOracle, StubRule, StubSynthesis, SynthesizedSources, EQUIVALENT_TOKEN, NOT_EQUIVALENT_TOKEN,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewardError {
    #[error("contract violation: {0}")]
    ContractViolation(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverRewardBreakdown {
    pub r_sfm: i32,
    pub r_cmp: i32,
    pub r_acc: i32,
    pub total: i32,
}

impl SolverRewardBreakdown {
    fn new(r_sfm: i32, r_cmp: i32, r_acc: i32) -> Self {
        Self { r_sfm, r_cmp, r_acc, total: r_sfm + r_cmp + r_acc }
    }

    /// `r_acc ≠ 0 ⇒ r_cmp = 2` and `r_cmp ≠ 0 ⇒ r_sfm = 1`, with every
    /// component in its allowed set and a consistent total.
    pub fn satisfies_gates(&self) -> bool {
        matches!(self.r_sfm, 1 | -1)
            && matches!(self.r_cmp, 2 | -2 | 0)
            && matches!(self.r_acc, 3 | -3 | 0)
            && (self.r_cmp == 0 || self.r_sfm == 1)
            && (self.r_acc == 0 || self.r_cmp == 2)
            && (self.r_sfm != 1 || self.r_cmp != 0)
            && (self.r_cmp != 2 || self.r_acc != 0)
            && self.total == self.r_sfm + self.r_cmp + self.r_acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiverRewardBreakdown {
    pub r_pfm: f64,
    pub r_eqv: f64,
    pub r_dvg: f64,
    pub r_nvt: f64,
    pub r_adv: f64,
    pub total: f64,
}

impl GiverRewardBreakdown {
    fn zero() -> Self {
        Self { r_pfm: 0.0, r_eqv: 0.0, r_dvg: 0.0, r_nvt: 0.0, r_adv: 0.0, total: 0.0 }
    }

    pub fn satisfies_gates(&self) -> bool {
        let binary = |x: f64| x == 0.0 || x == 1.0;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        binary(self.r_pfm)
            && binary(self.r_eqv)
            && binary(self.r_adv)
            && unit(self.r_dvg)
            && unit(self.r_nvt)
            && (self.r_eqv == 0.0 || self.r_pfm == 1.0)
            && (self.r_eqv == 1.0 || (self.r_dvg == 0.0 && self.r_nvt == 0.0 && self.r_adv == 0.0))
            && (0.0..=5.0).contains(&self.total)
            && (self.total - (self.r_pfm + self.r_eqv + self.r_dvg + self.r_nvt + self.r_adv)).abs() < 1e-12
    }
}

/// Either role's breakdown, tagged for the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum RewardBreakdown {
    Solver(SolverRewardBreakdown),
    Giver(GiverRewardBreakdown),
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        match self {
            RewardBreakdown::Solver(s) => s.total as f64,
            RewardBreakdown::Giver(g) => g.total,
        }
    }

    pub fn satisfies_gates(&self) -> bool {
        match self {
            RewardBreakdown::Solver(s) => s.satisfies_gates(),
            RewardBreakdown::Giver(g) => g.satisfies_gates(),
        }
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn components(&self) -> Vec<(&'static str, f64)> {
        match self {
            RewardBreakdown::Solver(s) => {
                vec![("r_sfm", s.r_sfm as f64), ("r_cmp", s.r_cmp as f64), ("r_acc", s.r_acc as f64)]
            }
            RewardBreakdown::Giver(g) => vec![
                ("r_pfm", g.r_pfm),
                ("r_eqv", g.r_eqv),
                ("r_dvg", g.r_dvg),
                ("r_nvt", g.r_nvt),
                ("r_adv", g.r_adv),
            ],
        }
    }
}

/// The caller judges a response only when it is well-formed, so `verdict`
/// must be present exactly for well-formed responses.
pub fn solver_reward(
    parsed: &ParsedResponse,
    verdict: Option<&VerdictReport>,
) -> Result<SolverRewardBreakdown, RewardError> {
    match (parsed.well_formed, verdict) {
        (false, Some(_)) => Err(RewardError::ContractViolation("verdict supplied for an unformatted response")),
        (true, None) => Err(RewardError::ContractViolation("well-formed response was not judged")),
        (false, None) => Ok(SolverRewardBreakdown::new(-1, 0, 0)),
        (true, Some(v)) => Ok(match v.aggregate {
            Aggregate::CompileError => SolverRewardBreakdown::new(1, -2, 0),
            Aggregate::Failed => SolverRewardBreakdown::new(1, 2, -3),
            Aggregate::Accepted => SolverRewardBreakdown::new(1, 2, 3),
        }),
    }
}

/// Everything the teacher reward depends on for one revision.
#[derive(Debug, Clone, Copy)]
pub struct GiverInputs<'a> {
    pub kernel: &'a str,
    /// Text compared against the kernel and the previous revision.
    pub revision: &'a str,
    /// Revision from the previous iteration; the kernel at the first one.
    pub prev_revision: &'a str,
    pub structure: ProblemStructure,
    pub parsed: &'a ParsedResponse,
    pub equivalent: bool,
    /// Binary accuracy of one student attempt; only measured on equivalent
    /// revisions.
    pub student_acc: Option<bool>,
}

impl GiverInputs<'_> {
    /// Whether this revision passes the format and equivalence gates.
    pub fn passes_equivalence_gate(&self) -> bool {
        self.parsed.well_formed && self.structure.complete() && self.equivalent
    }
}

pub fn giver_reward(inputs: &GiverInputs<'_>, model: &TfidfModel) -> Result<GiverRewardBreakdown, RewardError> {
    let r_pfm = inputs.parsed.well_formed && inputs.structure.complete();
    let r_eqv = r_pfm && inputs.equivalent;
    if !r_eqv {
        if inputs.student_acc.is_some() {
            return Err(RewardError::ContractViolation("student accuracy supplied for a revision that fails the equivalence gate"));
        }
        return Ok(GiverRewardBreakdown { r_pfm: if r_pfm { 1.0 } else { 0.0 }, total: if r_pfm { 1.0 } else { 0.0 }, ..GiverRewardBreakdown::zero() });
    }
    let acc = inputs
        .student_acc
        .ok_or(RewardError::ContractViolation("equivalent revision without a student attempt"))?;
    let r_dvg = 1.0 - model.similarity(inputs.kernel, inputs.revision);
    let r_nvt = 1.0 - model.similarity(inputs.revision, inputs.prev_revision);
    let r_adv = if acc { 0.0 } else { 1.0 };
    Ok(GiverRewardBreakdown { r_pfm: 1.0, r_eqv: 1.0, r_dvg, r_nvt, r_adv, total: 2.0 + r_dvg + r_nvt + r_adv })
}
