use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use refnav_core::agents::{run_suite, AgentConfig, AgentFactory};
use refnav_core::env::{Environment, Task};
use refnav_core::episode::{EpisodeConfig, Simulator};
use refnav_core::par::Exec;
use refnav_core::synth::{generate_synthetic_world, SynthesisParams};

fn worlds() -> Vec<(Arc<Environment>, Vec<Task>)> {
    (0..4)
        .map(|s| {
            let (env, tasks) = generate_synthetic_world(&SynthesisParams::new(s, 20, 50)).unwrap();
            (Arc::new(env), tasks)
        })
        .collect()
}

// Fresh simulators each iteration so panorama rendering is part of the cost.
fn suite(worlds: &[(Arc<Environment>, Vec<Task>)]) -> Vec<(Arc<Simulator>, Vec<Task>)> {
    worlds
        .iter()
        .map(|(env, tasks)| (Arc::new(Simulator::new(env.clone(), EpisodeConfig::default())), tasks.clone()))
        .collect()
}

fn random_suite(c: &mut Criterion) {
    let w = worlds();
    let agent = AgentFactory::new(&AgentConfig::random(0)).unwrap();
    let mut g = c.benchmark_group("random_agent_suite");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| black_box(run_suite(&suite(&w), &agent, exec).unwrap()))
        });
    }
    g.finish();
}

fn panoramas(c: &mut Criterion) {
    let w = worlds();
    let mut g = c.benchmark_group("all_panoramas");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                for (env, _) in &w {
                    let sim = Simulator::new(env.clone(), EpisodeConfig::default());
                    let ids: Vec<&str> = env.viewpoints.iter().map(|v| v.id.as_str()).collect();
                    black_box(refnav_core::par::map(exec, &ids, |vp| sim.panorama(vp)));
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, random_suite, panoramas);
criterion_main!(benches);
