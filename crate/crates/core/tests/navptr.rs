use std::sync::Arc;

use refnav_core::env::{Edge, Environment, Viewpoint};
use refnav_core::episode::{Action, EpisodeConfig, Simulator};
use refnav_core::navptr::config::{NavPointConfig, TOP_K};
use refnav_core::navptr::fixtures::{toy_config, toy_episode, toy_object};
use refnav_core::navptr::fusion::candidate_input;
use refnav_core::navptr::loss::{loss_exp, loss_nav, loss_total};
use refnav_core::navptr::navigator::{add_positional, co_ground, encode_instruction, nav_step, progress_target};
use refnav_core::navptr::pointer::{pointer_encode, pointer_score, ObjectCandidate};
use refnav_core::navptr::search::{frontier_search, plan_end, Expansion};
use refnav_core::navptr::{train, NavPointParams, TrainConfig};
use refnav_core::neural::{grad_check, ParamId, ParamStore, Tape, Tensor2};
use refnav_core::par::Exec;
use refnav_core::seed::Mixer;
use refnav_core::synth::{generate_synthetic_world, SynthesisParams};

fn toy_params() -> NavPointParams {
    NavPointParams::new(toy_config()).unwrap()
}

fn zero(store: &mut ParamStore, id: ParamId) {
    for v in &mut store.get_mut(id).data {
        *v = 0.0;
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn progress_targets() {
    assert_eq!(progress_target(4.0, 4.0), 0.0);
    assert_eq!(progress_target(4.0, 0.0), 1.0);
    assert_eq!(progress_target(4.0, 2.0), 0.5);
    assert_eq!(progress_target(4.0, 9.0), 0.0);
    assert_eq!(progress_target(0.0, 0.0), 1.0);
}

#[test]
fn text_attention_is_uniform_without_a_query() {
    let mut p = toy_params();
    let id = p.nav.w_x.w;
    zero(&mut p.store, id);
    let toy = toy_episode(&p, 1);
    let mut tape = Tape::new();
    let x = encode_instruction(&mut tape, &p, &toy.episode.tokens);
    let pe_x = add_positional(&mut tape, x);
    let v = tape.constant(Tensor2::new(2, p.config.fused_dim(), (0..2 * p.config.fused_dim()).map(|i| (i as f64 * 0.37).sin()).collect()));
    let h = tape.constant(Tensor2::column((0..p.config.d_hidden).map(|i| i as f64 - 2.0).collect()));
    let cg = co_ground(&mut tape, &p, pe_x, v, h);
    let l = toy.episode.tokens.len();
    for &a in &tape.value(cg.alpha).data {
        assert!(close(a, 1.0 / l as f64, 1e-12));
    }
    let pe = tape.value(pe_x).clone();
    for d in 0..p.config.d_text {
        let mean: f64 = (0..l).map(|r| pe.get(r, d)).sum::<f64>() / l as f64;
        assert!(close(tape.value(cg.x_hat).get(d, 0), mean, 1e-12));
    }
    let beta = &tape.value(cg.beta).data;
    assert!(close(beta.iter().sum::<f64>(), 1.0, 1e-12));
}

#[test]
fn single_candidate_gets_all_visual_attention() {
    let p = toy_params();
    let toy = toy_episode(&p, 2);
    let mut tape = Tape::new();
    let x = encode_instruction(&mut tape, &p, &toy.episode.tokens);
    let pe_x = add_positional(&mut tape, x);
    let row: Vec<f64> = (0..p.config.fused_dim()).map(|i| (i as f64).cos()).collect();
    let v = tape.constant(Tensor2::new(1, row.len(), row.clone()));
    let h = tape.constant(Tensor2::zeros(p.config.d_hidden, 1));
    let cg = co_ground(&mut tape, &p, pe_x, v, h);
    assert_eq!(tape.value(cg.beta).data, vec![1.0]);
    for (a, b) in tape.value(cg.v_hat).data.iter().zip(&row) {
        assert!(close(*a, *b, 1e-12));
    }
}

#[test]
fn zero_action_weights_give_zero_logits() {
    let mut p = toy_params();
    let id = p.nav.w_a.w;
    zero(&mut p.store, id);
    let toy = toy_episode(&p, 3);
    let mut tape = Tape::new();
    let x = encode_instruction(&mut tape, &p, &toy.episode.tokens);
    let pe_x = add_positional(&mut tape, x);
    let h = tape.constant(Tensor2::zeros(p.config.d_hidden, 1));
    let c = tape.constant(Tensor2::zeros(p.config.d_hidden, 1));
    let st = &toy.episode.steps[0];
    let out = nav_step(&mut tape, &p, pe_x, &st.candidates, st.prev_action, h, c, &mut Default::default());
    assert_eq!(tape.value(out.logits).data, vec![0.0; st.candidates.len()]);
}

#[test]
fn pointer_module_weights_and_single_word_phrase() {
    let p = toy_params();
    let mut tape = Tape::new();
    let toy = toy_episode(&p, 4);
    let q = pointer_encode(&mut tape, &p, &toy.episode.tokens);
    let w = &tape.value(q.w).data;
    assert_eq!(w.len(), 3);
    assert!(close(w.iter().sum(), 1.0, 1e-12));
    for a in &q.attn {
        assert!(close(tape.value(*a).data.iter().sum(), 1.0, 1e-12));
    }

    let one = pointer_encode(&mut tape, &p, &toy.episode.tokens[..1]);
    let e1 = tape.value(one.e).data.clone();
    for m in 0..3 {
        assert_eq!(tape.value(one.attn[m]).data, vec![1.0]);
        assert_eq!(tape.value(one.q[m]).data, e1);
    }
}

#[test]
fn identical_objects_score_equally() {
    let p = toy_params();
    let toy = toy_episode(&p, 5);
    let a: &ObjectCandidate = &toy.objects[2];
    let b = ObjectCandidate { object: "copy".into(), ..a.clone() };
    let mut tape = Tape::new();
    let q = pointer_encode(&mut tape, &p, &toy.episode.tokens);
    let sa = pointer_score(&mut tape, &p, &q, a).total;
    let sb = pointer_score(&mut tape, &p, &q, &b).total;
    assert_eq!(tape.scalar(sa), tape.scalar(sb));
}

#[test]
fn fusion_pads_and_ablates() {
    let p = toy_params();
    let toy = toy_episode(&p, 6);
    let base = vec![0.25; p.config.d_visual_base];
    let objs = vec![toy.objects[0].clone()];
    let ci = candidate_input(&p, &base, &objs, &[1.0]);
    assert_eq!(ci.labels.len(), TOP_K);
    assert_eq!(ci.labels[0], toy.objects[0].label_tokens);
    assert!(ci.labels[1..].iter().all(|l| l == &vec![p.vocab.null_id()]));
    assert_eq!(ci.obj_visual.len(), p.config.d_obj);
    for (o, m) in ci.obj_visual.iter().zip(&toy.objects[0].mean_cell) {
        assert!(close(*o, m / TOP_K as f64, 1e-15));
    }

    // top three by score, the lowest dropped
    let all = toy.objects.clone();
    let ci = candidate_input(&p, &base, &all, &[0.1, 0.9, 0.5, 0.7]);
    let want: Vec<_> = [1, 3, 2].iter().map(|&i| all[i].label_tokens.clone()).collect();
    assert_eq!(ci.labels, want);

    let lan = NavPointParams::new(NavPointConfig { lan_only: true, ..toy_config() }).unwrap();
    let ci = candidate_input(&lan, &base, &all, &[0.1, 0.9, 0.5, 0.7]);
    assert!(ci.base.iter().chain(&ci.obj_visual).all(|&v| v == 0.0));
    assert!(ci.labels.iter().all(|l| l == &vec![lan.vocab.null_id()]));
}

#[test]
fn nav_loss_with_uninformative_heads() {
    let mut p = toy_params();
    let id = p.nav.w_a.w;
    zero(&mut p.store, id);
    let id = p.nav.progress.w;
    zero(&mut p.store, id);
    let id = p.nav.progress.b.unwrap();
    zero(&mut p.store, id);
    let toy = toy_episode(&p, 7);
    let mut tape = Tape::new();
    let l = loss_nav(&mut tape, &p, &toy.episode);
    // two steps over three candidates; progress 0.5 against targets 0 and 1
    let l1 = p.config.lambda1;
    let want = l1 * 2.0 * 3f64.ln() + (1.0 - l1) * 2.0 * 0.25;
    assert!(close(tape.scalar(l), want, 1e-12), "{} vs {want}", tape.scalar(l));
}

#[test]
fn ranking_loss_is_margin_per_term_when_negatives_equal_positives() {
    let p = toy_params();
    let mut toy = toy_episode(&p, 8);
    let pair = &mut toy.pairs[0];
    pair.neg_tokens = Some(pair.tokens.clone());
    pair.neg_object = Some(pair.target.clone());
    let mut tape = Tape::new();
    let l = loss_exp(&mut tape, &p, &toy.pairs);
    let c = &p.config;
    assert!(close(tape.scalar(l), (c.lambda2 + c.lambda3) * c.margin, 1e-12));

    pair_without_negatives(&p);
}

fn pair_without_negatives(p: &NavPointParams) {
    let mut toy = toy_episode(p, 9);
    toy.pairs[0].neg_tokens = None;
    toy.pairs[0].neg_object = None;
    let mut tape = Tape::new();
    let l = loss_exp(&mut tape, p, &toy.pairs);
    assert_eq!(tape.scalar(l), 0.0);
}

/// Hinge margins of the toy pair, so the check can avoid points where the
/// loss is not differentiable.
fn hinge_gaps(p: &NavPointParams, seed: u64) -> Vec<f64> {
    let toy = toy_episode(p, seed);
    let pair = &toy.pairs[0];
    let mut tape = Tape::new();
    let q = pointer_encode(&mut tape, p, &pair.tokens);
    let pos = pointer_score(&mut tape, p, &q, &pair.target).total;
    let qn = pointer_encode(&mut tape, p, pair.neg_tokens.as_ref().unwrap());
    let a = pointer_score(&mut tape, p, &qn, &pair.target).total;
    let b = pointer_score(&mut tape, p, &q, pair.neg_object.as_ref().unwrap()).total;
    let (pos, a, b) = (tape.scalar(pos), tape.scalar(a), tape.scalar(b));
    vec![a - pos + p.config.margin, b - pos + p.config.margin]
}

#[test]
fn total_loss_gradients_match_central_differences() {
    let mut p = toy_params();
    let seed = (0..50).find(|&s| hinge_gaps(&p, s).iter().all(|g| g.abs() > 1e-3)).unwrap();
    let toy = toy_episode(&p, seed);
    let (ep, pairs) = (toy.episode.clone(), toy.pairs.clone());
    let config = p.config.clone();
    let vocab = p.vocab.clone();
    let (nav, ptr, fuse) = (p.nav.clone(), p.ptr.clone(), p.fuse.clone());
    let report = grad_check(&mut p.store, 1e-5, |tape, store| {
        let view = NavPointParams {
            config: config.clone(),
            vocab: vocab.clone(),
            store: store.clone(),
            nav: nav.clone(),
            ptr: ptr.clone(),
            fuse: fuse.clone(),
        };
        loss_total(tape, &view, &ep, &pairs)
    });
    assert!(report.checked > 100);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

fn chain(n: usize) -> Environment {
    let viewpoints: Vec<Viewpoint> = (0..n)
        .map(|i| Viewpoint { id: format!("v{i}"), position: [2.0 * i as f64, 0.0, 1.5] })
        .collect();
    let edges = (1..n)
        .map(|i| Edge { a: format!("v{}", i - 1), b: format!("v{i}"), length: 2.0 })
        .collect();
    Environment::new("chain", viewpoints, edges, Vec::new(), 1).unwrap()
}

fn moves(actions: &[Action]) -> Vec<&str> {
    actions
        .iter()
        .map(|a| match a {
            Action::Move { viewpoint } => viewpoint.as_str(),
            Action::Stop => "STOP",
            _ => "?",
        })
        .collect()
}

/// Stop scores from `stops`, every move costs `step`.
fn scorer(env: &Environment, stops: Vec<f64>, step: f64) -> impl FnMut(&str, &()) -> Expansion<()> + '_ {
    move |vp, _| {
        let i: usize = vp[1..].parse().unwrap();
        Expansion {
            stop: stops[i],
            moves: env.neighbors(vp).into_iter().map(|(nb, _)| (nb.id.clone(), step, ())).collect(),
        }
    }
}

#[test]
fn search_stops_at_once_when_stopping_dominates() {
    let env = chain(4);
    let plan = frontier_search(&env, "v0", 20, (), scorer(&env, vec![0.0; 4], -5.0));
    assert_eq!(moves(&plan.actions), ["STOP"]);
    assert_eq!(plan.expanded, ["v0"]);
}

#[test]
fn search_walks_the_chain_to_the_best_stop() {
    let env = chain(4);
    let plan = frontier_search(&env, "v0", 20, (), scorer(&env, vec![-10.0, -10.0, -10.0, 0.0], -0.1));
    assert_eq!(moves(&plan.actions), ["v1", "v2", "v3", "STOP"]);
    assert_eq!(plan_end("v0", &plan.actions), "v3");
    assert_eq!(plan.ending.len(), 4);
}

#[test]
fn search_ties_prefer_moves_then_smaller_ids() {
    let env = chain(3);
    let plan = frontier_search(&env, "v1", 20, (), scorer(&env, vec![-5.0; 3], -1.0));
    assert_eq!(plan.expanded, ["v1", "v0", "v2"]);

    // stop at the root scores the same as the first move; the move wins
    let plan = frontier_search(&env, "v0", 20, (), scorer(&env, vec![-1.0, -9.0, -9.0], -1.0));
    assert_eq!(plan.expanded[..2], ["v0", "v1"]);
    assert_eq!(plan_end("v0", &plan.actions), "v0");
}

#[test]
fn search_respects_both_budgets() {
    let env = chain(4);
    // half the budget for exploring, and the walk back must stay under the cap
    let plan = frontier_search(&env, "v0", 4, (), scorer(&env, vec![-10.0, -10.1, -10.2, 0.0], -0.01));
    assert_eq!(plan.expanded, ["v0", "v1", "v2"]);
    assert_eq!(moves(&plan.actions), ["v1", "v2", "v1", "STOP"]);
    assert!(plan.actions.len() - 1 < 4);
}

fn small_suite() -> Vec<(Arc<Simulator>, Vec<refnav_core::Task>)> {
    let (env, tasks) = generate_synthetic_world(&SynthesisParams::new(11, 8, 10)).unwrap();
    let cfg = EpisodeConfig { feature_dim: toy_config().d_visual_base, ..EpisodeConfig::default() };
    vec![(Arc::new(Simulator::new(Arc::new(env), cfg)), tasks)]
}

#[test]
fn training_is_reproducible_across_execution_modes() {
    let suite = small_suite();
    let cfg = TrainConfig { model: toy_config(), pointer_epochs: 2, nav_epochs: 2, lr: 0.5, ..TrainConfig::default() };
    let a = train(&suite, &cfg, Exec::Sequential).unwrap();
    let b = train(&suite, &cfg, Exec::Parallel).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.params.store.to_checkpoint(), b.params.store.to_checkpoint());
    let c = train(&suite, &TrainConfig { seed: 1, ..cfg }, Exec::Sequential).unwrap();
    assert_ne!(a.curve, c.curve);
}

#[test]
fn train_config_parsing() {
    let cfg = TrainConfig::from_kv("# comment\nlr = 0.2\nnav_epochs=3  # trailing\n\nlan_only = true\n").unwrap();
    assert_eq!(cfg.lr, 0.2);
    assert_eq!(cfg.nav_epochs, 3);
    assert!(cfg.model.lan_only);
    let full = TrainConfig::from_kv("d_g = 7\npreset = full\n").unwrap();
    assert_eq!(full.model.d_text, 512);
    assert_eq!(full.model.d_g, 7);
    for (text, needle) in [
        ("lr 0.2", "line 1"),
        ("\nlr = fast", "line 2"),
        ("speed = 3", "unknown key"),
        ("preset = huge", "unknown preset"),
        ("lr = -1", "lr"),
        ("d_label = 3", "d_label"),
    ] {
        let err = TrainConfig::from_kv(text).unwrap_err().to_string();
        assert!(err.contains(needle), "{text:?}: {err}");
    }
}

#[test]
fn toy_objects_are_seeded() {
    let p = toy_params();
    let a = toy_object(&p, "x", "red chair", 2, &mut Mixer::new("t").rng());
    let b = toy_object(&p, "x", "red chair", 2, &mut Mixer::new("t").rng());
    assert_eq!(a, b);
    assert_eq!(a.cells.shape(), (p.config.grid * p.config.grid, p.config.d_obj));
}
