//! Classifier heads, prediction rules, embeddings and checkpoints.

pub mod checkpoint;
pub mod embeddings;
pub mod heads;

use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, CHECKPOINT_FORMAT_VERSION};
pub use embeddings::{EmbeddingRecord, EmbeddingTable};
pub use heads::{scbm_forward, scbmt_forward, Head, ModelInput, ScbmForward, ScbmHead, ScbmtHead};

use crate::error::{Error, Result};
use crate::nncore::{Differentiable, LossSpec};
use crate::scalar::Scalar;
use crate::task::{argmax, HardLabel, Task, TaskKind};

/// How soft outputs become hard labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRules {
    /// A label is predicted when its probability is at least this.
    #[serde(default = "default_threshold")]
    pub multilabel_threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

impl Default for DecisionRules {
    fn default() -> Self {
        Self {
            multilabel_threshold: default_threshold(),
        }
    }
}

impl DecisionRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.multilabel_threshold > 0.0 && self.multilabel_threshold < 1.0) {
            return Err(Error::Config(format!(
                "multilabel threshold must lie in (0, 1), got {}",
                self.multilabel_threshold
            )));
        }
        Ok(())
    }

    /// Hard decision for one soft output. Single-label ties go to the lowest
    /// index, which makes SEXIST win a binary tie.
    pub fn decide(&self, task: Task, soft: &[f64]) -> HardLabel {
        match task.kind() {
            TaskKind::Binary | TaskKind::Multiclass => HardLabel::Class(argmax(soft)),
            TaskKind::Multilabel => HardLabel::Labels(
                (0..soft.len())
                    .filter(|&l| soft[l] >= self.multilabel_threshold)
                    .collect(),
            ),
        }
    }
}

/// Soft output (softmax distribution or per-label sigmoid) and hard label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub soft: Vec<f64>,
    pub hard: HardLabel,
}

pub fn check_arity<T: Scalar>(head: &Head<T>, task: Task) -> Result<()> {
    if head.output_dim() != task.arity() {
        return Err(Error::Config(format!(
            "head has {} outputs but task {task} has {} labels",
            head.output_dim(),
            task.arity()
        )));
    }
    Ok(())
}

pub fn predict<T: Scalar>(head: &Head<T>, input: &ModelInput<T>, task: Task, rules: &DecisionRules) -> Result<Prediction> {
    check_arity(head, task)?;
    let logits = head.logits(input)?;
    let soft: Vec<f64> = LossSpec::new(task.loss_kind())
        .output(&logits)
        .into_iter()
        .map(Scalar::to_f64_lossy)
        .collect();
    if soft.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("non-finite model output".into()));
    }
    let hard = rules.decide(task, &soft);
    Ok(Prediction { soft, hard })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{DenseParams, Matrix, Mlp, Parameters};
    use crate::pipeline::train::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_scbm(d: usize, hidden: usize, arity: usize, seed: u64) -> ScbmHead<f64> {
        let mut rng = seeded_rng(seed);
        let mut head = ScbmHead::xavier(d, &[hidden], arity, &mut rng);
        // Non-zero biases so the check covers them.
        for t in head.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        head
    }

    fn random_scbmt(d: usize, de: usize, arity: usize, seed: u64) -> ScbmtHead<f64> {
        let mut rng = seeded_rng(seed);
        let mut head = ScbmtHead::xavier(d, de, &[6], arity, &mut rng);
        for t in head.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        head
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn zero_gate_halves_the_input() {
        let mut head = random_scbm(4, 3, 2, 1);
        head.gate = DenseParams::zeros(4, 4);
        let c = vec![0.2, 0.4, 0.6, 1.0];
        let (_, r) = scbm_forward(&head, &c).unwrap();
        assert_eq!(r, vec![0.1, 0.2, 0.3, 0.5]);
        let (logits, r) = scbm_forward(&head, &[0.0; 4]).unwrap();
        assert_eq!(r, vec![0.0; 4]);
        assert_eq!(logits, head.mlp.forward(&[0.0; 4]).unwrap());
    }

    #[test]
    fn activation_matches_straight_line_recomputation() {
        let head = random_scbm(12, 8, 3, 5);
        let c = random_vec(12, 6);
        let (_, r) = scbm_forward(&head, &c).unwrap();
        for i in 0..12 {
            let mut z = head.gate.bias[i];
            for j in 0..12 {
                z += head.gate.weight[(i, j)] * c[j];
            }
            let expected = c[i] / (1.0 + (-z).exp());
            assert!((r[i] - expected).abs() < 1e-12);
            assert!(r[i] <= c[i] && r[i] >= 0.0);
        }
    }

    #[test]
    fn shape_errors() {
        let head = random_scbm(4, 3, 2, 1);
        assert!(matches!(scbm_forward(&head, &[0.0; 3]), Err(Error::Shape(_))));
        let fused = random_scbmt(4, 3, 2, 1);
        assert!(matches!(scbmt_forward(&fused, &[0.0; 4], &[0.0; 2]), Err(Error::Shape(_))));
        assert!(ScbmHead::new(DenseParams::<f64>::zeros(4, 3), Mlp::xavier(3, &[], 2, &mut seeded_rng(0))).is_err());
    }

    #[test]
    fn fusion_width_is_twice_the_embedding() {
        let head = ScbmtHead::<f64>::xavier(131, 1024, &[64], 2, &mut seeded_rng(3));
        assert_eq!(head.mlp.input_dim(), 2048);
        assert_eq!(head.fuse(&vec![0.5; 131], &vec![0.1; 1024]).unwrap().len(), 2048);
    }

    #[test]
    fn zero_projection_reduces_to_embedding_classifier() {
        let mut head = random_scbmt(10, 4, 2, 9);
        head.projection = DenseParams::zeros(10, 4);
        for seed in 0..5 {
            let c = random_vec(10, seed);
            let e = random_vec(4, seed + 100);
            let mut x = vec![0.0; 4];
            x.extend_from_slice(&e);
            let reference = head.mlp.forward(&x).unwrap();
            let out = scbmt_forward(&head, &c, &e).unwrap();
            for (a, b) in out.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_embedding_depends_only_on_concepts() {
        let head = random_scbmt(10, 4, 3, 11);
        let c = random_vec(10, 1);
        let zero = scbmt_forward(&head, &c, &[0.0; 4]).unwrap();
        let mut x = head.concept_branch(&c).unwrap();
        x.extend_from_slice(&[0.0; 4]);
        assert_eq!(zero, head.mlp.forward(&x).unwrap());
    }

    #[test]
    fn predict_rules() {
        let rules = DecisionRules::default();
        assert_eq!(rules.decide(Task::SexismIdentification, &[0.9, 0.1]), HardLabel::Class(0));
        assert_eq!(rules.decide(Task::SexismIdentification, &[0.5, 0.5]), HardLabel::Class(0));
        assert_eq!(
            rules.decide(Task::SexismCategorization, &[0.7, 0.2, 0.6, 0.4, 0.1]),
            HardLabel::Labels(vec![0, 2])
        );
        let head = Head::Scbm(random_scbm(5, 4, 2, 2));
        let input = ModelInput::concepts(random_vec(5, 3));
        assert!(matches!(
            predict(&head, &input, Task::SourceIntention, &rules),
            Err(Error::Config(_))
        ));
        let p = predict(&head, &input, Task::SexismIdentification, &rules).unwrap();
        assert!((p.soft.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(DecisionRules { multilabel_threshold: 1.0 }.validate().is_err());
    }

    /// Central differences over every parameter of `model`.
    fn check_gradients<M>(model: &M, batch: &[crate::nncore::Example<ModelInput<f64>, f64>], loss: &LossSpec) -> f64
    where
        M: Differentiable<f64, Input = ModelInput<f64>> + Clone,
    {
        let refs: Vec<_> = batch.iter().collect();
        let (_, grads) = crate::nncore::loss_and_grad(model, &refs, loss).unwrap();
        let mean_loss = |m: &M| -> f64 {
            batch
                .iter()
                .map(|ex| loss.loss_and_logit_grad(&m.logits(&ex.input).unwrap(), &ex.target).unwrap().0)
                .sum::<f64>()
                / batch.len() as f64
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let mut probe = model.clone();
        for (ti, tensor) in analytic.iter().enumerate() {
            for (pi, &a) in tensor.iter().enumerate() {
                let orig = probe.tensors()[ti][pi];
                probe.tensors_mut()[ti][pi] = orig + h;
                let up = mean_loss(&probe);
                probe.tensors_mut()[ti][pi] = orig - h;
                let down = mean_loss(&probe);
                probe.tensors_mut()[ti][pi] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    fn batch(d: usize, de: Option<usize>, arity: usize, multilabel: bool, seed: u64) -> Vec<crate::nncore::Example<ModelInput<f64>, f64>> {
        let mut rng = seeded_rng(seed);
        (0..4)
            .map(|i| {
                let concepts = random_vec(d, seed * 31 + i);
                let embedding = de.map(|n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
                let target = if multilabel {
                    (0..arity).map(|_| f64::from(rng.random_bool(0.5))).collect()
                } else {
                    let raw: Vec<f64> = (0..arity).map(|_| rng.random_range(0.0..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                };
                crate::nncore::Example {
                    input: ModelInput { concepts, embedding },
                    target,
                }
            })
            .collect()
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        use crate::nncore::LossKind;
        for seed in 0..10 {
            for (kind, multilabel, arity) in [
                (LossKind::SoftmaxCrossEntropySoftTarget, false, 3),
                (LossKind::PerLabelBinaryCrossEntropy, true, 5),
            ] {
                let loss = LossSpec::new(kind);
                let scbm = Head::Scbm(random_scbm(6, 5, arity, seed));
                let err = check_gradients(&scbm, &batch(6, None, arity, multilabel, seed), &loss);
                assert!(err < 1e-4, "scbm seed {seed} {kind:?}: {err}");
                let scbmt = Head::Scbmt(random_scbmt(6, 3, arity, seed));
                let err = check_gradients(&scbmt, &batch(6, Some(3), arity, multilabel, seed), &loss);
                assert!(err < 1e-4, "scbmt seed {seed} {kind:?}: {err}");
            }
        }
    }

    #[test]
    fn scbmt_requires_embeddings() {
        let head = Head::Scbmt(random_scbmt(4, 2, 2, 0));
        assert!(head.logits(&ModelInput::concepts(vec![0.0; 4])).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn permuting_the_lexicon_permutes_nothing_else(seed in 0u64..1000) {
            let d = 7;
            let head = random_scbm(d, 5, 3, seed);
            let c = random_vec(d, seed + 1);
            // Random permutation of concept positions.
            let mut perm: Vec<usize> = (0..d).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut seeded_rng(seed + 2));
            let pc: Vec<f64> = perm.iter().map(|&p| c[p]).collect();
            let mut gate_w = Matrix::zeros(d, d);
            let mut gate_b = vec![0.0; d];
            for i in 0..d {
                gate_b[i] = head.gate.bias[perm[i]];
                for j in 0..d {
                    gate_w[(i, j)] = head.gate.weight[(perm[i], perm[j])];
                }
            }
            let mut mlp = head.mlp.clone();
            let first = &head.mlp.layers[0];
            for o in 0..first.output_dim() {
                for j in 0..d {
                    mlp.layers[0].weight[(o, j)] = first.weight[(o, perm[j])];
                }
            }
            let permuted = ScbmHead::new(DenseParams::new(gate_w, gate_b).unwrap(), mlp).unwrap();
            let (a, ra) = scbm_forward(&head, &c).unwrap();
            let (b, rb) = scbm_forward(&permuted, &pc).unwrap();
            prop_assert_eq!(argmax(&a), argmax(&b));
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
            for i in 0..d {
                prop_assert!((rb[i] - ra[perm[i]]).abs() < 1e-15);
            }
        }
    }
}
