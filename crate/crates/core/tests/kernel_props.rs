use proptest::prelude::*;

use hat_core::eventlog::LogKind;
use hat_core::scenario::{DeviceGroup, Param, PromptLengths, ScriptedRequest, Workload};
use hat_core::workload::Models;
use hat_core::{run, run_with_models, Framework, Scenario};

fn framework() -> impl Strategy<Value = Framework> {
    prop::sample::select(Framework::ALL.to_vec())
}

fn small_scenario() -> impl Strategy<Value = Scenario> {
    (
        1usize..4,
        0.5f64..8.0,
        1.0f64..4.0,
        8usize..40,
        prop::sample::select(vec![1u32, 2, 4, 8]),
        3e6f64..12e6,
        any::<u64>(),
        framework(),
    )
        .prop_map(|(count, rate, horizon, max_new, p, uplink, seed, framework)| {
            let mut s = Scenario {
                devices: vec![DeviceGroup {
                    count,
                    uplink: Param::Uniform {
                        min: uplink,
                        max: uplink * 1.5,
                    },
                    ..DeviceGroup::default()
                }],
                workload: Workload {
                    rate,
                    horizon,
                    max_new,
                    prompt_len: PromptLengths::Uniform { min: 8, max: 600 },
                    ..Workload::default()
                },
                framework,
                seed,
                ..Scenario::default()
            };
            s.cloud.pipeline_len = p;
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_is_causal_and_requests_are_conserved(s in small_scenario()) {
        let out = run(&s).unwrap();
        let recs = &out.log.records;
        prop_assert!(recs.windows(2).all(|w| (w[0].time_ns, w[0].seq) < (w[1].time_ns, w[1].seq)));
        let eos = Models::build(&s.model, s.seed).unwrap().target.eos_id();
        for o in &out.outputs {
            let expected = o.tokens.iter().position(|&t| t == eos).map_or(s.workload.max_new, |i| i + 1);
            prop_assert_eq!(o.tokens.len(), expected.min(s.workload.max_new));
        }
        for r in &out.records {
            let mut last = r.arrival_ns;
            let mut chunk = 0;
            for e in recs.iter().filter(|e| e.request == Some(r.id)) {
                prop_assert!(e.time_ns >= r.arrival_ns);
                if e.kind == LogKind::Token {
                    prop_assert!(e.time_ns > last);
                    last = e.time_ns;
                }
                if e.kind == LogKind::UploadDone && e.detail.starts_with("payload=chunk") {
                    prop_assert_eq!(e.field("index"), Some(chunk));
                    chunk += 1;
                }
            }
            let done = recs.iter().filter(|e| e.kind == LogKind::RequestComplete && e.request == Some(r.id)).count();
            prop_assert_eq!(done, 1);
        }
    }

    #[test]
    fn timing_parameters_never_change_content(s in small_scenario(), p2 in prop::sample::select(vec![1u32, 2, 4, 8]), scale in 0.3f64..3.0) {
        let models = Models::build(&s.model, s.seed).unwrap();
        let base = run_with_models(&s, &models).unwrap();
        let mut t = s.clone();
        t.cloud.pipeline_len = p2;
        t.cloud.base_delay *= scale;
        t.devices[0].uplink = Param::Fixed(5e6 * scale);
        t.devices[0].draft_step = Param::Fixed(1e-3 * scale);
        t.fixed_chunk_size = 64;
        for fw in Framework::ALL {
            t.framework = fw;
            let other = run_with_models(&t, &models).unwrap();
            for (a, b) in base.outputs.iter().zip(&other.outputs) {
                prop_assert_eq!(&a.tokens, &b.tokens);
            }
        }
    }

    #[test]
    fn chunked_prefill_is_no_slower_than_ushape_by_more_than_a_chunk(
        prompt_len in 16u64..2048,
        uplink in 3e6f64..12e6,
        p in prop::sample::select(vec![1u32, 2, 4, 8]),
    ) {
        let mut s = Scenario {
            devices: vec![DeviceGroup { uplink: Param::Fixed(uplink), ..DeviceGroup::default() }],
            workload: Workload {
                scripted: Some(vec![ScriptedRequest { device: 0, time: 0.0, prompt_len }]),
                max_new: 2,
                ..Workload::default()
            },
            ..Scenario::default()
        };
        s.cloud.pipeline_len = p;
        let hat = run(&s).unwrap();
        s.framework = Framework::Ushape;
        let ushape = run(&s).unwrap();
        let chunk = hat.records[0].chunk_size as f64;
        let chunk_upload = (chunk * s.cloud.bytes_per_token / uplink * 1e9).ceil() as u64;
        prop_assert!(hat.records[0].ttft_ns <= ushape.records[0].ttft_ns + chunk_upload);
    }
}
