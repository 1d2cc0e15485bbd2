//! Fixtures shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

use std::sync::Arc;

use advrl_core::corpus::{ProblemTriplet, TestCase};
use advrl_core::grpo::GrpoConfig;
use advrl_core::judge::{Judge, JudgeConfig, ResourceLimits};
use advrl_core::policy::{Pick, Policy, SamplingConfig, Script, ScriptRule, ScriptStage, ScriptedPolicy, ToyPolicyParams};
use advrl_core::reward::{EquivalenceChecker, StubOracle};
use advrl_core::training::Role;

pub fn judge() -> Judge {
    judge_with(ResourceLimits::default())
}

pub fn judge_with(limits: ResourceLimits) -> Judge {
    Judge::new(JudgeConfig { limits, ..JudgeConfig::default() }).expect("judge")
}

pub fn tc(input: &str, output: &str) -> TestCase {
    TestCase { input: input.as_bytes().to_vec(), expected_output: output.as_bytes().to_vec() }
}

pub fn tagged(think: &str, answer: &str) -> String {
    format!("<think>{think}</think>\n<answer>{answer}</answer>")
}

pub fn cpp_answer(think: &str, code: &str) -> String {
    tagged(think, &format!("\n```cpp\n{code}\n```\n"))
}

pub const SUM_RIGHT: &str =
    "#include <cstdio>\nint main(){long long a,b;scanf(\"%lld %lld\",&a,&b);printf(\"%lld\\n\",a+b);}";
pub const SUM_WRONG: &str =
    "#include <cstdio>\nint main(){long long a,b;scanf(\"%lld %lld\",&a,&b);printf(\"%lld\\n\",a-b);}";
pub const MAX_RIGHT: &str =
    "#include <cstdio>\nint main(){long long x,y;scanf(\"%lld %lld\",&x,&y);printf(\"%lld\\n\",x>y?x:y);}";
pub const MAX_WRONG: &str =
    "#include <cstdio>\nint main(){long long x,y;scanf(\"%lld %lld\",&x,&y);printf(\"%lld\\n\",x<y?x:y);}";

pub const SUM_KERNEL: &str = "Description: Compute the sum of two integers A and B.
Input: One line with two integers A and B.
Output: Print A + B.
Example: for the input 1 2 the output is 3.
Constraints: absolute values are at most one billion.";

pub const MAX_KERNEL: &str = "Description: Print the larger of two integers X and Y.
Input: One line with two integers X and Y.
Output: Print the maximum of X and Y.
Example: for the input 3 9 the output is 9.
Constraints: absolute values are at most one billion.";

/// Equivalent narrative rewrite; the stub oracle keys on "merchant guild".
pub const SUM_STORY: &str = "Description: A merchant guild keeps two ledgers and wants their combined total, with A and B as the ledger balances.
Input: One line with the two balances A and B.
Output: Print the combined total.
Example: balances 1 and 2 combine to 3.
Constraints: every balance is at most one billion in absolute value.";

/// Reads like a rewrite of the sum kernel but asks for the difference.
pub const SUM_DRIFT: &str = "Description: A merchant keeps two ledgers of A and B and reports how far apart they are.
Input: One line with A and B.
Output: Print A minus B.
Example: balances 5 and 2 are 3 apart.
Constraints: every balance is at most one billion in absolute value.";

pub const MAX_STORY: &str = "Description: Two mountain climbers X and Y compare altitudes at the end of the day; the expedition log records the higher camp.
Input: One line with the altitudes X and Y.
Output: Print the higher altitude.
Example: camps at 3 and 9 log 9.
Constraints: every altitude is at most one billion in absolute value.";

pub const MAX_DRIFT: &str = "Description: Two mountain climbers X and Y compare altitudes and the log records the lower camp.
Input: One line with X and Y.
Output: Print the lower altitude.
Example: camps at 3 and 9 log 3.
Constraints: every altitude is at most one billion in absolute value.";

pub fn two_problem_corpus() -> Vec<ProblemTriplet> {
    let mut sum = ProblemTriplet::new("sum", SUM_KERNEL);
    sum.test_cases = vec![tc("1 2\n", "3\n"), tc("-5 5\n", "0\n"), tc("1000000000 1000000000\n", "2000000000\n")];
    let mut max = ProblemTriplet::new("max", MAX_KERNEL);
    max.test_cases = vec![tc("3 9\n", "9\n"), tc("-1 -7\n", "-1\n"), tc("4 4\n", "4\n")];
    vec![sum, max]
}

pub fn equivalence_stub() -> StubOracle {
    StubOracle::default()
        .with_rule(None, "merchant guild", "EQUIVALENT the ledgers are a renaming of the two summands")
        .with_rule(None, "expedition log", "EQUIVALENT the altitudes are a renaming of the two integers")
        .with_rule(None, "A minus B", "NOT_EQUIVALENT the rewrite asks for a difference instead of a sum")
        .with_rule(None, "lower", "NOT_EQUIVALENT the rewrite asks for the minimum instead of the maximum")
}

pub fn checker(stub: StubOracle) -> EquivalenceChecker {
    EquivalenceChecker::new(Arc::new(stub))
}

fn stage(from_version: u64, responses: Vec<String>, pick: Pick) -> ScriptStage {
    ScriptStage { from_version, responses, pick }
}

/// Teacher that cycles through the kernel verbatim, an equivalent story and
/// a drifted story.
pub fn scripted_teacher() -> ScriptedPolicy {
    let rule = |key: &str, kernel: &str, story: &str, drift: &str| ScriptRule {
        prompt_contains: key.into(),
        stages: vec![stage(
            0,
            vec![tagged("keep the statement", kernel), tagged("add a story", story), tagged("add a story", drift)],
            Pick::Cycle,
        )],
    };
    ScriptedPolicy::new(Script {
        rules: vec![
            rule("sum of two integers A and B", SUM_KERNEL, SUM_STORY, SUM_DRIFT),
            rule("larger of two integers X and Y", MAX_KERNEL, MAX_STORY, MAX_DRIFT),
        ],
        fallback: vec![],
    })
}

/// Student whose accuracy follows its update count: always wrong before
/// `mixed_from` updates, a seeded mix of right, wrong and unformatted
/// answers until `right_from`, always right afterwards.
pub fn scheduled_student(mixed_from: u64, right_from: u64) -> ScriptedPolicy {
    let rule = |key: &str, right: &str, wrong: &str| ScriptRule {
        prompt_contains: key.into(),
        stages: vec![
            stage(0, vec![cpp_answer("guess", wrong)], Pick::Cycle),
            stage(
                mixed_from,
                vec![cpp_answer("careful", right), cpp_answer("guess", wrong), "I think it is easy".into()],
                Pick::Random,
            ),
            stage(right_from, vec![cpp_answer("careful", right)], Pick::Cycle),
        ],
    };
    ScriptedPolicy::new(Script {
        rules: vec![rule("A and B", SUM_RIGHT, SUM_WRONG), rule("X and Y", MAX_RIGHT, MAX_WRONG)],
        fallback: vec![],
    })
}

pub fn scripted_role(policy: ScriptedPolicy, sampling: SamplingConfig) -> Role {
    Role::new(Policy::Scripted(policy), sampling, GrpoConfig::default())
}

pub const TOY_PREFIX: &str = "<think>t</think><answer>int";
pub const TOY_RIGHT: &str = "main(){__builtin_puts(\"1\");}</answer>";
pub const TOY_WRONG: &str = "main(){__builtin_puts(\"2\");}</answer>";

pub fn toy_vocabulary() -> Vec<String> {
    [TOY_PREFIX, TOY_RIGHT, TOY_WRONG, "junk", "<eos>"].map(String::from).to_vec()
}

pub fn toy_uniform() -> ToyPolicyParams {
    ToyPolicyParams::uniform(toy_vocabulary(), "<eos>").unwrap()
}

pub fn toy_accepted_tokens() -> Vec<String> {
    [TOY_PREFIX, TOY_RIGHT, "<eos>"].map(String::from).to_vec()
}

/// Two kernels whose only test expects the output `1`.
pub fn toy_corpus() -> Vec<ProblemTriplet> {
    ["Description: Print the number one.", "Description: Print the smallest positive integer."]
        .iter()
        .enumerate()
        .map(|(i, first)| {
            let text = format!(
                "{first}\nInput: Nothing.\nOutput: A single line.\nExample: the output is 1.\nConstraints: none."
            );
            let mut t = ProblemTriplet::new(format!("one{i}"), text);
            t.test_cases = vec![tc("", "1\n")];
            t
        })
        .collect()
}

/// Teacher that returns every kernel unchanged.
pub fn echo_teacher(corpus: &[ProblemTriplet]) -> ScriptedPolicy {
    ScriptedPolicy::new(Script {
        rules: corpus
            .iter()
            .map(|p| ScriptRule {
                prompt_contains: p.kernel_text.lines().next().unwrap().to_string(),
                stages: vec![stage(0, vec![tagged("unchanged", &p.kernel_text)], Pick::Cycle)],
            })
            .collect(),
        fallback: vec![],
    })
}

pub const ECHO_GENERATOR: &str = "#include <cstdio>\n#include <cstdlib>\nint main(int argc,char**argv){unsigned s=(unsigned)atoll(argv[1]);printf(\"%u\\n\",(s*2654435761u)%1000u);}";
pub const ECHO_REFERENCE: &str = "#include <cstdio>\nint main(){long long x;scanf(\"%lld\",&x);printf(\"%lld\\n\",x);}";
pub const PAIR_GENERATOR: &str = "#include <cstdio>\n#include <cstdlib>\nint main(int argc,char**argv){unsigned s=(unsigned)atoll(argv[1]);printf(\"%d %d\\n\",(int)(s*7919u%2001u)-1000,(int)(s*104729u%2001u)-1000);}";
pub const DOUBLE_REFERENCE: &str = "#include <cstdio>\nint main(){long long x;scanf(\"%lld\",&x);printf(\"%lld\\n\",2*x);}";

/// Six raw kernels: four with working sources, one whose generator exits
/// with an error and one whose reference does not compile.
pub fn raw_pipeline_fixture() -> (Vec<String>, StubOracle) {
    let raw = vec![
        "[echo] Print the given integer.".to_string(),
        "[sum] Print the sum of two integers.".to_string(),
        "[max] Print the larger of two integers.".to_string(),
        "[double] Print twice the given integer.".to_string(),
        "[broken-generator] Print the given integer.".to_string(),
        "[broken-reference] Print the given integer.".to_string(),
    ];
    let stub = StubOracle::default()
        .with_synthesis("[echo]", ECHO_GENERATOR, ECHO_REFERENCE)
        .with_synthesis("[sum]", PAIR_GENERATOR, SUM_RIGHT)
        .with_synthesis("[max]", PAIR_GENERATOR, MAX_RIGHT)
        .with_synthesis("[double]", ECHO_GENERATOR, DOUBLE_REFERENCE)
        .with_synthesis("[broken-generator]", "int main(){return 3;}", ECHO_REFERENCE)
        .with_synthesis("[broken-reference]", ECHO_GENERATOR, "int main( { return 0; }");
    (raw, stub)
}
