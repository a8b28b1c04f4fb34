use crate::autodiff::{BnStats, PoolMode};
use crate::error::{Error, Result};
use crate::init::{init_he, init_normal};
use crate::rng::derive_seed;
use crate::{ParamStore, Tensor, Var};

use super::config::{FusionStrategy, Modality, ModelConfig, Stage};
use super::layers::{
    adaptive_fuse, head_forward, iwc_weights, ma_forward, residual_block_forward, stem_forward, Ctx,
};

/// Standard deviation of the attention and importance-weight convolutions.
pub const ATTENTION_INIT_STD: f64 = 0.02;

/// One batch of network inputs. Images are `[N,3,S,S]`; masks are
/// `[N,1,S/4,S/4]` and `[N,1,S/8,S/8]` (a leading 1 broadcasts).
#[derive(Debug, Clone, Default)]
pub struct ModelInput {
    pub texture: Option<Tensor>,
    pub depth: Option<Tensor>,
    pub mask1: Option<Tensor>,
    pub mask2: Option<Tensor>,
}

impl ModelInput {
    fn batch_size(&self) -> Result<usize> {
        self.texture
            .as_ref()
            .or(self.depth.as_ref())
            .map(|t| t.shape()[0])
            .ok_or_else(|| Error::Data("input has neither texture nor depth".into()))
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    He(usize),
    Normal(f64),
    Zeros,
    Ones,
}

/// The dual-branch network described by a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct AfNet {
    config: ModelConfig,
}

impl AfNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Backbone branch names, in the order their inputs are consumed.
    pub fn branches(&self) -> Vec<&'static str> {
        let c = &self.config;
        match c.modality {
            Modality::Texture => vec!["texture"],
            Modality::Depth => vec!["depth"],
            Modality::Both if c.fusion_strategy == FusionStrategy::DataLevel => vec!["joint"],
            Modality::Both => vec!["texture", "depth"],
        }
    }

    /// Whether `br` computes `stage`. With conv-level fusion the depth branch
    /// ends at the last fusion position; later depth layers would feed nothing.
    fn runs(&self, br: &str, stage: Stage) -> bool {
        let c = &self.config;
        if br != "depth" || !c.dual_branch() || !c.fusion_strategy.is_conv_level() {
            return true;
        }
        c.fusion_positions.last().is_some_and(|&last| stage <= last)
    }

    fn head_prefixes(&self) -> Vec<String> {
        if self.config.dual_branch() && self.config.fusion_strategy == FusionStrategy::DecisionLevel {
            vec!["texture.head".into(), "depth.head".into()]
        } else {
            vec!["head".into()]
        }
    }

    fn head_input_width(&self) -> usize {
        let w = self.config.widths[3];
        if self.config.dual_branch() && self.config.fusion_strategy == FusionStrategy::FcConcat {
            2 * w
        } else {
            w
        }
    }

    fn declared(&self) -> (Vec<(String, Vec<usize>, Init)>, Vec<(String, usize)>) {
        let c = &self.config;
        let mut params = Vec::new();
        let mut bns = Vec::new();
        let conv = |params: &mut Vec<_>, name: String, cin: usize, cout: usize, k: usize, init: Init| {
            params.push((format!("{name}.w"), vec![cout, cin, k, k], init));
            params.push((format!("{name}.b"), vec![cout], Init::Zeros));
        };
        let bn = |params: &mut Vec<_>, bns: &mut Vec<_>, name: String, ch: usize| {
            params.push((format!("{name}.scale"), vec![ch], Init::Ones));
            params.push((format!("{name}.shift"), vec![ch], Init::Zeros));
            bns.push((name, ch));
        };
        for br in self.branches() {
            let cin = if br == "joint" { 6 } else { 3 };
            let c0 = c.widths[0];
            conv(&mut params, format!("{br}.stem.conv"), cin, c0, 7, Init::He(cin * 49));
            bn(&mut params, &mut bns, format!("{br}.stem.bn"), c0);
            let mut prev = c0;
            for stage in Stage::ALL {
                if !self.runs(br, stage) {
                    break;
                }
                let w = c.width(stage);
                let n = stage.number();
                for i in 0..c.blocks_per_layer {
                    let p = format!("{br}.layer{n}.{i}");
                    let bin = if i == 0 { prev } else { w };
                    conv(&mut params, format!("{p}.conv1"), bin, w, 3, Init::He(bin * 9));
                    bn(&mut params, &mut bns, format!("{p}.bn1"), w);
                    conv(&mut params, format!("{p}.conv2"), w, w, 3, Init::He(w * 9));
                    bn(&mut params, &mut bns, format!("{p}.bn2"), w);
                    if i == 0 && stage != Stage::Layer1 {
                        conv(&mut params, format!("{p}.down.conv"), bin, w, 1, Init::He(bin));
                        bn(&mut params, &mut bns, format!("{p}.down.bn"), w);
                    }
                }
                if c.ma_at(stage) {
                    for g in ["gamma", "beta"] {
                        for k in ["conv1", "conv2"] {
                            let name = format!("{br}.ma{n}.{g}.{k}");
                            conv(&mut params, name, w, w, 1, Init::Normal(ATTENTION_INIT_STD));
                        }
                    }
                }
                if c.fuses_at(stage) && c.fusion_strategy == FusionStrategy::ConvAdaptive {
                    let name = format!("{br}.iwc{n}.conv");
                    conv(&mut params, name, w, w, 1, Init::Normal(ATTENTION_INIT_STD));
                }
                prev = w;
            }
        }
        let d = self.head_input_width();
        let w = c.widths[3];
        let dims = [d, w / 2, w / 4, c.num_classes];
        for h in self.head_prefixes() {
            for (i, pair) in dims.windows(2).enumerate() {
                let init = if i < 2 { Init::He(pair[0]) } else { Init::Normal(1.0 / (pair[0] as f64).sqrt()) };
                params.push((format!("{h}.fc{}.w", i + 1), vec![pair[0], pair[1]], init));
                params.push((format!("{h}.fc{}.b", i + 1), vec![pair[1]], Init::Zeros));
            }
        }
        (params, bns)
    }

    /// Fresh parameters. Every tensor draws from its own stream seeded by
    /// the model seed and the tensor name, so toggling one module leaves all
    /// other initial values unchanged.
    pub fn init_params(&self) -> Result<ParamStore> {
        let (params, bns) = self.declared();
        let mut store = ParamStore::new();
        for (name, shape, init) in params {
            let seed = derive_seed(self.config.seed, &name);
            let t = match init {
                Init::He(fan_in) => init_he(&shape, fan_in, seed)?,
                Init::Normal(std) => init_normal(&shape, 0.0, std, seed)?,
                Init::Zeros => Tensor::zeros(&shape)?,
                Init::Ones => Tensor::full(&shape, 1.0)?,
            };
            store.insert(name, t);
        }
        for (name, ch) in bns {
            store.insert_bn(name, BnStats::new(ch));
        }
        Ok(store)
    }

    fn image(&self, ctx: &mut Ctx, t: Option<&Tensor>, what: &str) -> Result<Var> {
        let t = t.ok_or_else(|| Error::Data(format!("configuration needs {what} images")))?;
        let s = self.config.input_size;
        let [_, ch, h, w] = t.dims4()?;
        if ch != 3 || h != s || w != s {
            return Err(Error::Shape(format!(
                "{what} images must be [N,3,{s},{s}], got {:?}",
                t.shape()
            )));
        }
        Ok(ctx.tape.constant(t.clone()))
    }

    fn mask(&self, ctx: &mut Ctx, t: Option<&Tensor>, level: usize) -> Result<Var> {
        let t = t.ok_or_else(|| Error::Data(format!("mask attention needs mask{level}")))?;
        Ok(ctx.tape.constant(t.clone()))
    }

    fn layer(&self, ctx: &mut Ctx, br: &str, stage: Stage, mut x: Var) -> Result<Var> {
        for i in 0..self.config.blocks_per_layer {
            let p = format!("{br}.layer{}.{i}", stage.number());
            x = residual_block_forward(ctx, &p, x, i == 0 && stage != Stage::Layer1)?;
        }
        Ok(x)
    }

    fn pooled(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let [n, c, _, _] = ctx.tape.value(x).dims4()?;
        let p = ctx.tape.global_pool(x, PoolMode::Avg)?;
        ctx.tape.reshape(p, &[n, c])
    }

    /// Runs the network and returns `[N, num_classes]` logits. For the
    /// decision-level variant these are log-probabilities of the averaged
    /// branch softmaxes. Layer outputs are marked as `{branch}.layer{k}`
    /// (after attention) and `fused.layer{k}`.
    pub fn forward(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Var> {
        let c = &self.config;
        input.batch_size()?;
        let branches = self.branches();
        let mut xs = Vec::with_capacity(branches.len());
        for &br in &branches {
            let x = match br {
                "joint" => {
                    let t = self.image(ctx, input.texture.as_ref(), "texture")?;
                    let d = self.image(ctx, input.depth.as_ref(), "depth")?;
                    ctx.tape.concat(&[t, d])?
                }
                "texture" => self.image(ctx, input.texture.as_ref(), "texture")?,
                _ => self.image(ctx, input.depth.as_ref(), "depth")?,
            };
            xs.push(stem_forward(ctx, &format!("{br}.stem"), x)?);
        }
        let mask1 = if c.ma_at(Stage::Layer1) { Some(self.mask(ctx, input.mask1.as_ref(), 1)?) } else { None };
        let mask2 = if c.ma_at(Stage::Layer2) { Some(self.mask(ctx, input.mask2.as_ref(), 2)?) } else { None };

        for stage in Stage::ALL {
            let n = stage.number();
            for (x, &br) in xs.iter_mut().zip(&branches) {
                if !self.runs(br, stage) {
                    continue;
                }
                *x = self.layer(ctx, br, stage, *x)?;
                let mask = match stage {
                    Stage::Layer1 => mask1,
                    Stage::Layer2 => mask2,
                    _ => None,
                };
                if let Some(m) = mask {
                    *x = ma_forward(ctx, &format!("{br}.ma{n}"), *x, m)?;
                }
                ctx.tape.mark(&format!("{br}.layer{n}"), *x);
            }
            if c.fuses_at(stage) {
                let (t, d) = (xs[0], xs[1]);
                let fused = if c.fusion_strategy == FusionStrategy::ConvAdaptive {
                    let t_iw = iwc_weights(ctx, &format!("texture.iwc{n}"), t)?;
                    let d_iw = iwc_weights(ctx, &format!("depth.iwc{n}"), d)?;
                    adaptive_fuse(ctx.tape, t, d, t_iw, d_iw)?
                } else {
                    ctx.tape.add(t, d)?
                };
                ctx.tape.mark(&format!("fused.layer{n}"), fused);
                xs[0] = fused;
            }
        }

        if !c.dual_branch() || c.fusion_strategy.is_conv_level() {
            let f = self.pooled(ctx, xs[0])?;
            return head_forward(ctx, "head", f);
        }
        match c.fusion_strategy {
            FusionStrategy::FcConcat => {
                let ft = self.pooled(ctx, xs[0])?;
                let fd = self.pooled(ctx, xs[1])?;
                let f = ctx.tape.concat(&[ft, fd])?;
                head_forward(ctx, "head", f)
            }
            FusionStrategy::DecisionLevel => {
                let ft = self.pooled(ctx, xs[0])?;
                let lt = head_forward(ctx, "texture.head", ft)?;
                let fd = self.pooled(ctx, xs[1])?;
                let ld = head_forward(ctx, "depth.head", fd)?;
                ctx.tape.mark("texture.logits", lt);
                ctx.tape.mark("depth.logits", ld);
                ctx.tape.decision_average(lt, ld)
            }
            _ => unreachable!("conv-level and data-level fusion handled above"),
        }
    }
}
