// Temporary diagnostics for the async model's gradient flow.
use evsteer_core::eval::scene::{generate_scene, SceneConfig};
use evsteer_core::nn::{Tape, Tensor};
use evsteer_core::pipeline::*;
use evsteer_core::event::types::build_event_matrix;
use evsteer_core::event::Event;

fn main() {
    let cfg = PipelineConfig { bin_us: 10_000, ..PipelineConfig::default() };
    let scene = SceneConfig::default();
    let seq = generate_scene(&scene).unwrap();
    let params = build_params(&cfg, ModelKind::Asynchronous, 0).unwrap();

    // Instrument one gap's efe chain manually.
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape);
    let mut state = PipelineState::new(&cfg);
    // teacher-forced history after a few frames
    state.push_angle(seq.angles[1]);
    state.push_angle(seq.angles[2]);
    let groups = group_gap_events(seq.events_in_gap(2), seq.frame_time(2), cfg.bin_us);
    println!("gap 2: {} groups, history = {:?}", groups.len(), &state.angle_history[..4]);
    let mut hidden = tape.constant(state.gru_hidden.clone());
    for (key, group) in &groups {
        let relabeled: Vec<Event> = group.iter().map(|e| Event { t: *key, ..*e }).collect();
        let m = build_event_matrix(&relabeled, cfg.width, cfg.height).unwrap();
        let mv = tape.constant(m.to_tensor());
        let a = tape.constant(state.history_tensor());
        // manual chain to expose internals
        let l1 = tape.matmul(mv, bp.var("efe.a1")).unwrap();
        let l2 = tape.matvec(l1, a).unwrap();
        let l3 = tape.matmul(mv, bp.var("efe.a2")).unwrap();
        let v = tape.softmax(l2).unwrap();
        let l3t = tape.transpose(l3).unwrap();
        let t = tape.matvec(l3t, v).unwrap();
        let l2v = tape.value(l2);
        let l2max = l2v.data().iter().cloned().fold(f64::MIN, f64::max);
        let l2min = l2v.data().iter().cloned().fold(f64::MAX, f64::min);
        let vmax = tape.value(v).data().iter().cloned().fold(0.0, f64::max);
        let tnorm = (tape.value(t).data().iter().map(|x| x*x).sum::<f64>()).sqrt();
        hidden = gru_step(&mut tape, &bp, t, hidden).unwrap();
        let hnorm = (tape.value(hidden).data().iter().map(|x| x*x).sum::<f64>()).sqrt();
        println!("  ts {key}: {} events, L2 in [{l2min:.2}, {l2max:.2}], v_max {vmax:.3}, |T| {tnorm:.3}, |h| {hnorm:.3}", group.len());
    }

    // Full-sequence gradient norms per parameter group.
    let out = run_sequence(&params, &cfg, &seq, Mode::Train, true).unwrap();
    println!("\nloss {:.3}", out.loss.unwrap());
    let mut groups: std::collections::BTreeMap<String, f64> = Default::default();
    for (name, g) in out.gradients.unwrap() {
        let key = name.split('.').next().unwrap().to_string();
        let n: f64 = g.data().iter().map(|x| x * x).sum();
        *groups.entry(key).or_default() += n;
    }
    for (k, v) in groups {
        println!("grad norm {k}: {:.3e}", v.sqrt());
    }
    // Tensor scale sanity
    let t = Tensor::zeros(&[1]); let _ = t;
}
