mod common;

use common::{check_operator_property, check_prompt_case, check_trace, prompt_case, prose};
use perturbench::perturb::{MethodId, PerturbParams, Perturber};
use perturbench::InstructionSample;
use proptest::prelude::*;

fn perturber() -> Perturber {
    Perturber::default()
}

macro_rules! operator_suite {
    ($name:ident, $method:expr) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn $name(case in prompt_case(), seed in any::<u64>()) {
                let p = perturber();
                if let Err(e) = check_prompt_case(&p, &case, $method, seed) {
                    prop_assert!(false, "{}", e);
                }
            }
        }
    };
}

operator_suite!(c1_prompt_properties, MethodId::C1);
operator_suite!(c2_prompt_properties, MethodId::C2);
operator_suite!(c3_prompt_properties, MethodId::C3);
operator_suite!(w1_prompt_properties, MethodId::W1);
operator_suite!(w2_prompt_properties, MethodId::W2);
operator_suite!(w3_prompt_properties, MethodId::W3);
operator_suite!(s1_prompt_properties, MethodId::S1);
operator_suite!(s2_prompt_properties, MethodId::S2);
operator_suite!(s3_prompt_properties, MethodId::S3);
operator_suite!(c_mix_prompt_properties, MethodId::CMix);
operator_suite!(w_mix_prompt_properties, MethodId::WMix);
operator_suite!(s_mix_prompt_properties, MethodId::SMix);
operator_suite!(mix_all_prompt_properties, MethodId::MixAll);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn instruction_samples_keep_output(text in prose(), seed in any::<u64>(), m in 0usize..13) {
        let method = MethodId::ALL[m];
        let sample = InstructionSample { instruction: text.clone(), output: "def f():\n    pass\n".into() };
        let (out, trace) = perturber().perturb_sample(&sample, method, &PerturbParams::default(), seed).unwrap();
        prop_assert_eq!(&out.output, &sample.output);
        prop_assert_eq!(trace.field.as_str(), "instruction");
        check_trace(&trace, &text, &out.instruction).unwrap();
        check_operator_property(trace.applied.unwrap(), &text, &out.instruction).unwrap();
    }

    #[test]
    fn higher_char_rate_touches_more_sites(text in prose(), seed in any::<u64>()) {
        let p = perturber();
        let low = PerturbParams { char_rate: 0.05, ..Default::default() };
        let high = PerturbParams { char_rate: 0.5, ..Default::default() };
        let (_, a) = p.perturb_text(&text, MethodId::C3, &low, seed).unwrap();
        let (_, b) = p.perturb_text(&text, MethodId::C3, &high, seed).unwrap();
        prop_assert!(a.edits.len() <= b.edits.len());
    }
}

#[test]
fn aggregates_reach_every_constituent() {
    let p = perturber();
    let text = "Check if the given list contains duplicates. Return the sorted values.";
    for method in [MethodId::CMix, MethodId::WMix, MethodId::SMix, MethodId::MixAll] {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..400 {
            let (_, t) = p.perturb_text(text, method, &PerturbParams::default(), seed).unwrap();
            seen.insert(t.applied.unwrap());
        }
        assert_eq!(seen.len(), method.constituents().len(), "{method}");
    }
}
