//! Recurrent policy network, behaviour-cloning trainer and quantized bottleneck.

mod checkpoint;
mod mat;
mod policy;
mod train;

pub use mat::Mat;
pub use policy::{ternary, Cell, Code, Memory, Params, Qbn, QuantMode, RecurrentPolicy, StepOutput, QUANT_THRESHOLD};
pub use train::{insert_qbn, train_bc, Hyperparams, Sequence, TrainingBatch};

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch() -> TrainingBatch {
        let mut b = TrainingBatch::new();
        b.push(vec![(0, 1), (1, 0), (2, 2), (1, 1)], 1.0);
        b.push(vec![(2, 0), (0, 2)], 2.0);
        b.push(vec![(1, 2), (1, 2), (0, 0)], 0.5);
        b.push_partial(vec![(0, 0), (1, 2), (2, 1), (0, 1)], vec![false, true, false, true], 1.5);
        b
    }

    fn finite_difference_check(net: &RecurrentPolicy, loss: impl Fn(&RecurrentPolicy) -> f64, analytic: &Params, skip: &[&str]) {
        let eps = 1e-5;
        let names: Vec<&'static str> = net.params().tensors().iter().map(|t| t.0).collect();
        let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.3.to_vec()).collect();
        let mut checked = 0;
        for (k, name) in names.iter().enumerate() {
            if skip.contains(name) {
                continue;
            }
            for i in 0..grads[k].len() {
                let mut plus = net.clone();
                plus.params_mut().slices_mut()[k][i] += eps;
                let mut minus = net.clone();
                minus.params_mut().slices_mut()[k][i] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let a = grads[k][i];
                let err = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-3);
                assert!(err <= 1e-4, "{name}[{i}]: analytic {a} numeric {numeric}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn bptt_gradient_matches_finite_differences() {
        let net = RecurrentPolicy::new(3, 3, 5, 42).unwrap();
        let batch = toy_batch();
        let (_, g) = net.loss_and_gradient(&batch, QuantMode::Bypass);
        finite_difference_check(&net, |n| n.loss_and_gradient(&batch, QuantMode::Bypass).0, &g, &[]);
    }

    fn with_random_qbn(net: &RecurrentPolicy, bh: usize, seed: u64) -> RecurrentPolicy {
        let hidden: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..net.hidden_size()).map(|j| ((i * 7 + j * 3) as f64 * 0.37).sin()).collect())
            .collect();
        let hp = Hyperparams { epochs: 0, seed, ..Hyperparams::default() };
        insert_qbn(net, bh, &hidden, &hp).unwrap().0
    }

    #[test]
    fn gradient_with_bypassed_quantizer_matches_finite_differences() {
        let net = with_random_qbn(&RecurrentPolicy::new(3, 3, 4, 5).unwrap(), 3, 1);
        let batch = toy_batch();
        let (_, g) = net.loss_and_gradient(&batch, QuantMode::Bypass);
        finite_difference_check(&net, |n| n.loss_and_gradient(&batch, QuantMode::Bypass).0, &g, &[]);
    }

    #[test]
    fn straight_through_gradient_exact_for_head() {
        let net = with_random_qbn(&RecurrentPolicy::new(3, 3, 4, 9).unwrap(), 3, 2);
        let batch = toy_batch();
        let (_, g) = net.loss_and_gradient(&batch, QuantMode::Ternary);
        // Every tensor except the head also feeds a later quantizer through the recurrence.
        let recurrent = ["cell.w_u", "cell.u_u", "cell.b_u", "cell.w_c", "cell.u_c", "cell.b_c", "qbn.enc_w", "qbn.enc_b", "qbn.dec_w", "qbn.dec_b"];
        finite_difference_check(&net, |n| n.loss_and_gradient(&batch, QuantMode::Ternary).0, &g, &recurrent);
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let net = with_random_qbn(&RecurrentPolicy::new(2, 2, 4, 3).unwrap(), 2, 4);
        let hidden: Vec<Vec<f64>> = (0..5).map(|i| (0..4).map(|j| ((i + 2 * j) as f64).cos()).collect()).collect();
        let cell_and_head = ["cell.w_u", "cell.u_u", "cell.b_u", "cell.w_c", "cell.u_c", "cell.b_c", "head.w", "head.b"];
        let (_, g) = net.reconstruction_loss_and_gradient(&hidden, QuantMode::Bypass);
        finite_difference_check(&net, |n| n.reconstruction_loss_and_gradient(&hidden, QuantMode::Bypass).0, &g, &cell_and_head);
        let (_, g) = net.reconstruction_loss_and_gradient(&hidden, QuantMode::Ternary);
        let mut skip = cell_and_head.to_vec();
        skip.extend(["qbn.enc_w", "qbn.enc_b"]);
        finite_difference_check(&net, |n| n.reconstruction_loss_and_gradient(&hidden, QuantMode::Ternary).0, &g, &skip);
    }

    #[test]
    fn overfits_a_single_sequence() {
        let net = RecurrentPolicy::new(2, 3, 8, 1).unwrap();
        let mut batch = TrainingBatch::new();
        for _ in 0..4 {
            batch.push(vec![(0, 1), (1, 2), (0, 0), (1, 1), (0, 2)], 1.0);
        }
        let hp = Hyperparams { epochs: 400, learning_rate: 0.02, ..Hyperparams::default() };
        let (_, trace) = train_bc(&net, &batch, &hp).unwrap();
        assert_eq!(trace.len(), 400);
        assert!(*trace.last().unwrap() <= 0.01, "final loss {}", trace.last().unwrap());
    }

    #[test]
    fn learns_observation_to_action_map() {
        let net = RecurrentPolicy::new(3, 3, 6, 8).unwrap();
        let mut batch = TrainingBatch::new();
        let seqs = [vec![0, 1, 2, 1], vec![2, 2, 0], vec![1, 0, 0, 2, 1]];
        for s in &seqs {
            batch.push(s.iter().map(|&z| (z, if z == 1 { 1 } else { z / 2 * 2 })).collect(), 1.0);
        }
        let hp = Hyperparams { epochs: 300, ..Hyperparams::default() };
        let (net, _) = train_bc(&net, &batch, &hp).unwrap();
        let inputs = [(1, None), (0, Some(1)), (1, Some(0)), (2, Some(1)), (1, Some(2))];
        for (step, &(z, _)) in net.forward(&inputs).unwrap().iter().zip(&inputs) {
            if z == 1 {
                let best = (0..3).max_by(|&a, &b| step.probs[a].total_cmp(&step.probs[b])).unwrap();
                assert_eq!(best, 1);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let net = RecurrentPolicy::new(3, 3, 5, 2).unwrap();
        let hp = Hyperparams { epochs: 20, batch_size: 2, ..Hyperparams::default() };
        let a = train_bc(&net, &toy_batch(), &hp).unwrap();
        let b = train_bc(&net, &toy_batch(), &hp).unwrap();
        assert_eq!(a.0.to_checkpoint(), b.0.to_checkpoint());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let net = RecurrentPolicy::new(2, 2, 3, 0).unwrap();
        assert!(train_bc(&net, &TrainingBatch::new(), &Hyperparams::default()).is_err());
        let mut bad = TrainingBatch::new();
        bad.push(vec![(5, 0)], 1.0);
        assert!(train_bc(&net, &bad, &Hyperparams::default()).is_err());
    }

    #[test]
    fn duplicate_sequences_merge_weights() {
        let mut b = TrainingBatch::new();
        b.push(vec![(0, 1)], 1.0);
        b.push(vec![(1, 1)], 1.0);
        b.push(vec![(0, 1)], 2.0);
        b.merge_duplicates();
        assert_eq!(b.len(), 2);
        assert_eq!(b.sequences[0].weight, 3.0);
    }

    #[test]
    fn lossless_bottleneck_on_ternary_states() {
        let mut net = with_random_qbn(&RecurrentPolicy::new(2, 2, 3, 0).unwrap(), 3, 0);
        {
            let q = net.params_mut().qbn.as_mut().unwrap();
            q.enc_w = Mat { rows: 3, cols: 3, data: vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0] };
            q.enc_b = vec![0.0; 3];
            q.dec_w = Mat { rows: 3, cols: 3, data: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] };
            q.dec_b = vec![0.0; 3];
        }
        let states: Vec<Vec<f64>> = vec![vec![1.0, -1.0, 0.0], vec![0.0, 0.0, 1.0], vec![-1.0, 1.0, 1.0]];
        assert_eq!(net.reconstruction_mse(&states), 0.0);
        for s in &states {
            let code = net.quantize_hidden(s).unwrap();
            assert_eq!(code.iter().map(|&c| f64::from(c)).collect::<Vec<_>>(), *s);
        }
    }

    #[test]
    fn qbn_training_reduces_reconstruction_error() {
        let net = RecurrentPolicy::new(2, 2, 4, 0).unwrap();
        let hidden: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let k = (i % 4) as f64;
                vec![0.6 - 0.3 * k, 0.2 * k, -0.4, 0.1 * k - 0.2]
            })
            .collect();
        let untrained = insert_qbn(&net, 2, &hidden, &Hyperparams { epochs: 0, ..Hyperparams::default() }).unwrap().1;
        let (qnet, mse) = insert_qbn(&net, 2, &hidden, &Hyperparams { epochs: 200, ..Hyperparams::default() }).unwrap();
        assert!(mse < untrained);
        assert!(mse <= 0.05, "mse {mse}");
        assert_eq!(qnet.bottleneck(), Some(2));
        assert!(insert_qbn(&net, 0, &hidden, &Hyperparams::default()).is_err());
        assert!(insert_qbn(&net, 2, &[], &Hyperparams::default()).is_err());
    }

    #[test]
    fn code_queries_are_valid_distributions() {
        let net = with_random_qbn(&RecurrentPolicy::new(3, 4, 6, 7).unwrap(), 4, 3);
        let mut rng = crate::seed::rng(0, "codes", 0);
        for _ in 0..1000 {
            let code: Code = (0..4).map(|_| rand::Rng::gen_range(&mut rng, -1i8..=1)).collect();
            let z = rand::Rng::gen_range(&mut rng, 0..3);
            let p = net.action_distribution_for_code(&code, z).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert_eq!(p, net.action_distribution_for_code(&code, z).unwrap());
        }
        assert!(net.action_distribution_for_code(&[1, 0], 0).is_err());
        assert!(net.without_qbn().quantize_hidden(&[0.0; 6]).is_err());
    }

    #[test]
    fn code_query_matches_rollout_readout() {
        let net = with_random_qbn(&RecurrentPolicy::new(2, 3, 5, 1).unwrap(), 3, 1);
        let steps = net.forward(&[(0, None), (1, Some(2)), (0, Some(1))]).unwrap();
        for (step, z) in steps.iter().zip([0, 1, 0]) {
            let code = step.memory.code.as_ref().unwrap();
            assert_eq!(step.probs, net.action_distribution_for_code(code, z).unwrap());
        }
        let succ = net.successor_code(steps[0].memory.code.as_ref().unwrap(), 0, 2).unwrap();
        assert_eq!(Some(&succ), steps[1].memory.code.as_ref());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = with_random_qbn(&RecurrentPolicy::new(3, 2, 4, 77).unwrap(), 2, 5)
            .with_action_mask(vec![vec![true, false], vec![true, true], vec![false, true]])
            .unwrap();
        let (net, _) = train_bc(&net, &{
            let mut b = TrainingBatch::new();
            b.push(vec![(0, 0), (2, 1), (1, 0)], 1.0);
            b
        }, &Hyperparams { epochs: 3, ..Hyperparams::default() })
        .unwrap();
        let text = net.to_checkpoint();
        let back = RecurrentPolicy::from_checkpoint(&text).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.params().tensors().iter().zip(net.params().tensors()) {
            assert!(a.3.iter().zip(b.3).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.to_checkpoint(), text);
        let plain = RecurrentPolicy::new(1, 1, 1, 3).unwrap();
        assert_eq!(RecurrentPolicy::from_checkpoint(&plain.to_checkpoint()).unwrap(), plain);
        assert!(RecurrentPolicy::from_checkpoint("fscforge-network 2\n").is_err());
        assert!(RecurrentPolicy::from_checkpoint(&text.replace("tensor head.b", "tensor head.x")).is_err());
    }
}
