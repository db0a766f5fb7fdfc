//! Layer-level building blocks on top of the raw tape ops.

use super::init::{self, InitRng};
use super::params::{BoundParams, ParamSet};
use super::tape::{Tape, Var};
use super::NnError;

/// `x [n, d_in] x w [d_in, d_out] (+ bias [d_out]) -> [n, d_out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, bias: Option<Var>) -> Result<Var, NnError> {
    let y = tape.matmul(x, w)?;
    match bias {
        Some(b) => tape.add_row_bias(y, b),
        None => Ok(y),
    }
}

/// Parameter names of one GRU cell under `prefix`.
#[derive(Clone, Debug)]
pub struct GruNames {
    pub wz: String,
    pub uz: String,
    pub bz: String,
    pub wr: String,
    pub ur: String,
    pub br: String,
    pub wc: String,
    pub uc: String,
    pub bc: String,
}

impl GruNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            wz: format!("{prefix}.wz"),
            uz: format!("{prefix}.uz"),
            bz: format!("{prefix}.bz"),
            wr: format!("{prefix}.wr"),
            ur: format!("{prefix}.ur"),
            br: format!("{prefix}.br"),
            wc: format!("{prefix}.wc"),
            uc: format!("{prefix}.uc"),
            bc: format!("{prefix}.bc"),
        }
    }

    pub fn all(&self) -> [&str; 9] {
        [
            &self.wz, &self.uz, &self.bz, &self.wr, &self.ur, &self.br, &self.wc, &self.uc,
            &self.bc,
        ]
    }
}

/// Register GRU parameters: input maps `[d_h, d_in]`, recurrent maps
/// `[d_h, d_h]`, zero biases `[d_h]`.
pub fn register_gru(
    params: &mut ParamSet,
    prefix: &str,
    d_in: usize,
    d_h: usize,
    rng: &mut InitRng,
) -> Result<GruNames, NnError> {
    let names = GruNames::new(prefix);
    for w in [&names.wz, &names.wr, &names.wc] {
        params.insert(w.clone(), init::glorot_matrix(d_h, d_in, rng))?;
    }
    for u in [&names.uz, &names.ur, &names.uc] {
        params.insert(u.clone(), init::glorot_matrix(d_h, d_h, rng))?;
    }
    for b in [&names.bz, &names.br, &names.bc] {
        params.insert(b.clone(), init::zeros(&[d_h]))?;
    }
    Ok(names)
}

/// One gated-recurrent-unit step.
///
/// ```text
/// z = sigmoid(Wz x + Uz h + bz)        update gate
/// r = sigmoid(Wr x + Ur h + br)        reset gate
/// c = tanh(Wc x + Uc (r .* h) + bc)    candidate state
/// h' = z .* h + (1 - z) .* c
/// ```
///
/// A saturated update gate (`z -> 1`) therefore keeps the previous state.
/// Components stay inside `(-1, 1)` for any step count: `h'` is a strict
/// convex blend of `h` and a tanh output.
pub fn gru_cell(
    tape: &mut Tape,
    bp: &BoundParams,
    names: &GruNames,
    x: Var,
    h_prev: Var,
) -> Result<Var, NnError> {
    let gate = |tape: &mut Tape, w: &str, u: &str, b: &str, hx: Var| -> Result<Var, NnError> {
        let wx = tape.matvec(bp.var(w), x)?;
        let uh = tape.matvec(bp.var(u), hx)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, bp.var(b))
    };

    let z_pre = gate(tape, &names.wz, &names.uz, &names.bz, h_prev)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, &names.wr, &names.ur, &names.br, h_prev)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h_prev)?;
    let c_pre = gate(tape, &names.wc, &names.uc, &names.bc, rh)?;
    let c = tape.tanh(c_pre);

    let keep = tape.mul(z, h_prev)?;
    let gate_c = tape.one_minus(z);
    let take = tape.mul(gate_c, c)?;
    tape.add(keep, take)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::seeded_rng;
    use crate::nn::tensor::Tensor;

    #[test]
    fn linear_identity_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = linear(&mut tape, x, w, None).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn linear_zero_input_zero_weight_grad() {
        // Zero x with an all-ones upstream seed: dW must be zero.
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[3, 4]));
        let w = tape.leaf(Tensor::filled(&[4, 2], 0.5));
        let y = linear(&mut tape, x, w, None).unwrap();
        let s = tape.sum_all(y); // upstream gradient of ones on y
        let g = tape.backward(s).unwrap();
        assert!(g.get(w).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        let mut rng = seeded_rng(11);
        let a = init::glorot_matrix(3, 4, &mut rng);
        let b = init::glorot_matrix(4, 2, &mut rng);
        // Independent triple-loop product.
        let mut expected = vec![0.0; 3 * 2];
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    expected[i * 2 + j] += a.at2(i, k) * b.at2(k, j);
                }
            }
        }
        let mut tape = Tape::new();
        let av = tape.leaf(a);
        let bv = tape.leaf(b);
        let y = linear(&mut tape, av, bv, None).unwrap();
        for (got, want) in tape.value(y).data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    fn zero_gru(d_in: usize, d_h: usize) -> (ParamSet, GruNames) {
        let mut params = ParamSet::new();
        let names = GruNames::new("gru");
        for w in [&names.wz, &names.wr, &names.wc] {
            params.insert(w.clone(), Tensor::zeros(&[d_h, d_in])).unwrap();
        }
        for u in [&names.uz, &names.ur, &names.uc] {
            params.insert(u.clone(), Tensor::zeros(&[d_h, d_h])).unwrap();
        }
        for b in [&names.bz, &names.br, &names.bc] {
            params.insert(b.clone(), Tensor::zeros(&[d_h])).unwrap();
        }
        (params, names)
    }

    #[test]
    fn gru_zero_everything_stays_zero() {
        let (params, names) = zero_gru(3, 4);
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let x = tape.constant(Tensor::zeros(&[3]));
        let h = tape.constant(Tensor::zeros(&[4]));
        let h2 = gru_cell(&mut tape, &bp, &names, x, h).unwrap();
        assert!(tape.value(h2).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_saturated_update_gate_keeps_state() {
        let (mut params, names) = zero_gru(3, 4);
        // Large positive update-gate bias drives z to 1.
        params.get_mut(&names.bz).unwrap().data_mut().fill(40.0);
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let x = tape.constant(Tensor::from_vec(vec![0.3, -0.2, 0.9]));
        let h_prev = Tensor::from_vec(vec![0.5, -0.25, 0.1, 0.8]);
        let h = tape.constant(h_prev.clone());
        let h2 = gru_cell(&mut tape, &bp, &names, x, h).unwrap();
        for (a, b) in tape.value(h2).data().iter().zip(h_prev.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_unrolled_gradients_match_finite_differences() {
        let mut rng = seeded_rng(5);
        let mut params = ParamSet::new();
        let names = register_gru(&mut params, "gru", 3, 4, &mut rng).unwrap();
        // Nonzero biases so the fd probe exercises them.
        for b in [&names.bz, &names.br, &names.bc] {
            for v in params.get_mut(b).unwrap().data_mut() {
                *v = 0.05;
            }
        }
        let inputs: Vec<Tensor> = (0..5)
            .map(|i| Tensor::from_vec(vec![0.1 * i as f64, -0.2, 0.3 + 0.05 * i as f64]))
            .collect();
        let report = crate::nn::gradcheck::grad_check(&params, 1e-4, move |tape, bp| {
            let mut h = tape.constant(Tensor::zeros(&[4]));
            for input in &inputs {
                let x = tape.constant(input.clone());
                h = gru_cell(tape, bp, &names, x, h)?;
            }
            let sq = tape.mul(h, h)?;
            Ok(tape.sum_all(sq))
        })
        .unwrap();
        assert!(report.passed(), "max rel {}", report.max_rel);
    }

    #[test]
    fn gru_state_stays_in_open_unit_interval() {
        let mut rng = seeded_rng(21);
        let mut params = ParamSet::new();
        let names = register_gru(&mut params, "gru", 2, 6, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bp = params.bind(&mut tape);
        let mut h = tape.constant(Tensor::zeros(&[6]));
        for i in 0..200 {
            let x = tape.constant(Tensor::from_vec(vec![(i as f64).sin() * 5.0, 3.0]));
            h = gru_cell(&mut tape, &bp, &names, x, h).unwrap();
            assert!(tape.value(h).data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }
}
