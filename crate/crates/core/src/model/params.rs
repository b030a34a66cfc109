//! The learnable tensors, with a canonical naming/ordering that the
//! optimizer, gradient plumbing and checkpoint format all share.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use crate::error::Result;
use crate::numerics::Tensor;
use crate::rng::derive_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_shift: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_shift: Tensor,
    pub ff_w1: Tensor,
    pub ff_b1: Tensor,
    pub ff_w2: Tensor,
    pub ff_b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `[d_max, d_model]` feature projection.
    pub feat_w: Tensor,
    pub feat_b: Tensor,
    /// `[c_max + 1, d_model]`; the final row embeds "label absent".
    pub label_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: Tensor,
    pub final_ln_shift: Tensor,
    /// `[d_model, c_max]` classification head.
    pub head_w: Tensor,
    pub head_b: Tensor,
}

fn randn(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    Tensor::new(
        shape.to_vec(),
        (0..shape.iter().product())
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn ones(shape: &[usize]) -> Tensor {
    Tensor::new(shape.to_vec(), vec![1.0; shape.iter().product()])
}

impl ModelParams {
    /// Fresh initialization: weight matrices `N(0, 1/fan_in)`, biases zero,
    /// layer-norm gain one.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = derive_rng(seed, "model-init", 0);
        let d = config.d_model;
        let proj_std = (1.0 / config.d_max as f64).sqrt();
        let d_std = (1.0 / d as f64).sqrt();
        let ff_std = (1.0 / config.d_ff as f64).sqrt();

        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: ones(&[d]),
                ln1_shift: Tensor::zeros(&[d]),
                wq: randn(&mut rng, &[d, d], d_std),
                bq: Tensor::zeros(&[d]),
                wk: randn(&mut rng, &[d, d], d_std),
                bk: Tensor::zeros(&[d]),
                wv: randn(&mut rng, &[d, d], d_std),
                bv: Tensor::zeros(&[d]),
                wo: randn(&mut rng, &[d, d], d_std),
                bo: Tensor::zeros(&[d]),
                ln2_gain: ones(&[d]),
                ln2_shift: Tensor::zeros(&[d]),
                ff_w1: randn(&mut rng, &[d, config.d_ff], d_std),
                ff_b1: Tensor::zeros(&[config.d_ff]),
                ff_w2: randn(&mut rng, &[config.d_ff, d], ff_std),
                ff_b2: Tensor::zeros(&[d]),
            })
            .collect();

        Ok(ModelParams {
            feat_w: randn(&mut rng, &[config.d_max, d], proj_std),
            feat_b: Tensor::zeros(&[d]),
            label_emb: randn(&mut rng, &[config.c_max + 1, d], 1.0),
            layers,
            final_ln_gain: ones(&[d]),
            final_ln_shift: Tensor::zeros(&[d]),
            head_w: randn(&mut rng, &[d, config.c_max], d_std),
            head_b: Tensor::zeros(&[config.c_max]),
            config: config.clone(),
        })
    }

    /// All tensors zeroed; used when reconstructing from a checkpoint.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        for t in p.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        Ok(p)
    }

    /// Canonical (name, tensor) listing. Serialization, the optimizer and
    /// gradient extraction all iterate in exactly this order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("feat.w".into(), &self.feat_w),
            ("feat.b".into(), &self.feat_b),
            ("label_emb".into(), &self.label_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (suffix, t) in [
                ("ln1.gain", &layer.ln1_gain),
                ("ln1.shift", &layer.ln1_shift),
                ("attn.wq", &layer.wq),
                ("attn.bq", &layer.bq),
                ("attn.wk", &layer.wk),
                ("attn.bk", &layer.bk),
                ("attn.wv", &layer.wv),
                ("attn.bv", &layer.bv),
                ("attn.wo", &layer.wo),
                ("attn.bo", &layer.bo),
                ("ln2.gain", &layer.ln2_gain),
                ("ln2.shift", &layer.ln2_shift),
                ("ff.w1", &layer.ff_w1),
                ("ff.b1", &layer.ff_b1),
                ("ff.w2", &layer.ff_w2),
                ("ff.b2", &layer.ff_b2),
            ] {
                out.push((format!("layer{l}.{suffix}"), t));
            }
        }
        out.push(("final_ln.gain".into(), &self.final_ln_gain));
        out.push(("final_ln.shift".into(), &self.final_ln_shift));
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.feat_w, &mut self.feat_b, &mut self.label_emb];
        for layer in &mut self.layers {
            out.extend([
                &mut layer.ln1_gain,
                &mut layer.ln1_shift,
                &mut layer.wq,
                &mut layer.bq,
                &mut layer.wk,
                &mut layer.bk,
                &mut layer.wv,
                &mut layer.bv,
                &mut layer.wo,
                &mut layer.bo,
                &mut layer.ln2_gain,
                &mut layer.ln2_shift,
                &mut layer.ff_w1,
                &mut layer.ff_b1,
                &mut layer.ff_w2,
                &mut layer.ff_b2,
            ]);
        }
        out.push(&mut self.final_ln_gain);
        out.push(&mut self.final_ln_shift);
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}
