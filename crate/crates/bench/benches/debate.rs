use criterion::{black_box, criterion_group, criterion_main, Criterion};

use mad_core::prompts::PromptKit;
use mad_core::{
    render_context, run_debate, AgentRole, BackendSpec, DebateConfig, ScriptEntry, TaskKind,
    TopicRecord, Transcript, Utterance,
};

fn scripted_config(rounds: u32) -> DebateConfig {
    let mut config = DebateConfig {
        max_iterations: rounds,
        ..DebateConfig::default()
    };
    for side in 1..=2u32 {
        let script = (1..=rounds)
            .map(|r| ScriptEntry::any(format!("side {side} argues its case in round {r}")))
            .collect();
        config
            .backend_bindings
            .insert(format!("side{side}"), BackendSpec::Scripted { script });
    }
    let mut judge = vec![];
    for _ in 1..rounds {
        judge.push(ScriptEntry::any("Decision: No\nAnswer: pending\nWinner: Tie"));
    }
    judge.push(ScriptEntry::any("Decision: Yes\nAnswer: 4\nWinner: Negative"));
    judge.push(ScriptEntry::any("Answer: 4\nWinner: Negative"));
    config
        .backend_bindings
        .insert("judge".to_string(), BackendSpec::Scripted { script: judge });
    config
}

fn bench_run_debate(c: &mut Criterion) {
    let topic = TopicRecord::new("bench", TaskKind::Qa, "What is 2+2?");
    c.bench_function("run_debate_scripted_3_rounds", |b| {
        b.iter(|| {
            let config = scripted_config(3);
            black_box(run_debate(&topic, &config).unwrap())
        })
    });
}

fn bench_render_context(c: &mut Criterion) {
    let topic = TopicRecord::new("bench", TaskKind::Qa, "What is 2+2?");
    let config = scripted_config(3);
    let kit = PromptKit::default();
    let mut transcript = Transcript::new("d", "bench", "f");
    for i in 1..=3u32 {
        for side in 1..=2u32 {
            transcript
                .append(Utterance::new(
                    AgentRole::debater(side),
                    i,
                    format!("a fairly long argument repeated for benchmarking round {i}"),
                ))
                .unwrap();
        }
        transcript
            .append(Utterance::new(AgentRole::Judge, i, "Decision: No"))
            .unwrap();
    }
    c.bench_function("render_context_judge_3_rounds", |b| {
        b.iter(|| {
            black_box(
                render_context(&transcript, AgentRole::Judge, &config, &topic, &kit).unwrap(),
            )
        })
    });
}

criterion_group!(benches, bench_run_debate, bench_render_context);
criterion_main!(benches);
