//! Error classification into exit codes.

use advrl_core::config::ConfigError;
use advrl_core::corpus::CorpusError;
use advrl_core::eval::EvalError;
use advrl_core::judge::JudgeError;
use advrl_core::policy::PolicyError;
use advrl_core::reward::OracleError;
use advrl_core::training::TrainingError;

pub const OK: u8 = 0;
pub const DOMAIN: u8 = 1;
pub const USAGE: u8 = 2;
pub const ENVIRONMENT: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }

    pub fn usage(message: impl ToString) -> Self {
        Self::new(USAGE, message)
    }

    pub fn environment(message: impl ToString) -> Self {
        Self::new(ENVIRONMENT, message)
    }
}

fn policy_code(e: &PolicyError) -> u8 {
    match e {
        PolicyError::BackendUnavailable(_)
        | PolicyError::Auth(_)
        | PolicyError::RateLimited { .. }
        | PolicyError::ContextOverflow(_) => ENVIRONMENT,
        PolicyError::UnknownToken(_) | PolicyError::InvalidParams(_) | PolicyError::EmptyGroup => USAGE,
        PolicyError::Grpo(_) => DOMAIN,
    }
}

fn judge_code(e: &JudgeError) -> u8 {
    match e {
        JudgeError::SandboxSetup(_) => ENVIRONMENT,
        JudgeError::GeneratorFailure(_) => DOMAIN,
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::new(USAGE, e)
    }
}

impl From<PolicyError> for Failure {
    fn from(e: PolicyError) -> Self {
        Self::new(policy_code(&e), e)
    }
}

impl From<JudgeError> for Failure {
    fn from(e: JudgeError) -> Self {
        Self::new(judge_code(&e), e)
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Self::new(ENVIRONMENT, e)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::Io { .. }
            | CorpusError::MalformedRecord { .. }
            | CorpusError::DuplicateId(_)
            | CorpusError::InvalidCount => USAGE,
            CorpusError::GeneratorFailure(_) | CorpusError::ReferenceFailure(_) => DOMAIN,
            CorpusError::Judge(j) => judge_code(j),
            CorpusError::Oracle(_) => ENVIRONMENT,
        };
        Self::new(code, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Domain(_) => DOMAIN,
            EvalError::InvalidConfig(_) => USAGE,
            EvalError::Policy(p) => policy_code(p),
            EvalError::Judge(j) => judge_code(j),
        };
        Self::new(code, e)
    }
}

impl From<TrainingError> for Failure {
    fn from(e: TrainingError) -> Self {
        let code = match &e {
            TrainingError::Config(_) | TrainingError::Checkpoint(_) => USAGE,
            TrainingError::Policy(p) => policy_code(p),
            TrainingError::Judge(j) => judge_code(j),
            TrainingError::Oracle(_) | TrainingError::Io { .. } => ENVIRONMENT,
            TrainingError::Reward(_)
            | TrainingError::Grpo(_)
            | TrainingError::Similarity(_)
            | TrainingError::CorruptLog { .. }
            | TrainingError::Export(_) => DOMAIN,
        };
        Self::new(code, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes() {
        assert_eq!(Failure::from(PolicyError::RateLimited { attempts: 3 }).code, ENVIRONMENT);
        assert_eq!(Failure::from(TrainingError::Config("x".into())).code, USAGE);
        assert_eq!(Failure::from(TrainingError::CorruptLog { line: 2, message: "x".into() }).code, DOMAIN);
        assert_eq!(Failure::from(EvalError::Policy(PolicyError::Auth("x".into()))).code, ENVIRONMENT);
        assert_eq!(Failure::from(ConfigError::Invalid("x".into())).code, USAGE);
    }
}
