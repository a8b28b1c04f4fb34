//! Building blocks shared by every fusion variant. Each block reads its
//! parameters from a [`ParamStore`] under a dotted prefix and records its
//! computation on a [`Tape`].

use crate::autodiff::PoolMode;
use crate::error::{Error, Result};
use crate::{ParamStore, Tape, Var};

/// Borrowed state for one forward pass.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a mut ParamStore,
    pub training: bool,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a mut Tape, params: &'a mut ParamStore, training: bool) -> Self {
        Self { tape, params, training }
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let t = self.params.get(name)?;
        Ok(self.tape.param(name, t))
    }

    pub fn conv(&mut self, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.param(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        self.tape.conv2d(x, w, b, stride, pad)
    }

    pub fn bn(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let scale = self.param(&format!("{prefix}.scale"))?;
        let shift = self.param(&format!("{prefix}.shift"))?;
        let stats = self.params.bn_mut(prefix)?;
        self.tape.batchnorm2d(x, scale, shift, stats, self.training)
    }

    pub fn linear(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        self.tape.linear(x, w, b)
    }

    fn channels(&self, x: Var) -> Result<usize> {
        Ok(self.tape.value(x).dims4()?[1])
    }
}

/// 7×7/2 conv, batchnorm, relu, 3×3/2 max pool.
pub fn stem_forward(ctx: &mut Ctx, prefix: &str, x: Var) -> Result<Var> {
    let [_, _, h, w] = ctx.tape.value(x).dims4()?;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::Config(format!(
            "stem input {h}x{w} is not divisible by 4"
        )));
    }
    let y = ctx.conv(&format!("{prefix}.conv"), x, 2, 3)?;
    let y = ctx.bn(&format!("{prefix}.bn"), y)?;
    let y = ctx.tape.relu(y);
    ctx.tape.pool2d(y, PoolMode::Max, 3, 3, 2, 1)
}

/// Basic residual block. With `downsample` the first conv has stride 2 and
/// the shortcut is a 1×1/2 projection under `{prefix}.down`.
pub fn residual_block_forward(ctx: &mut Ctx, prefix: &str, x: Var, downsample: bool) -> Result<Var> {
    let cin = ctx.channels(x)?;
    let stride = if downsample { 2 } else { 1 };
    let y = ctx.conv(&format!("{prefix}.conv1"), x, stride, 1)?;
    let y = ctx.bn(&format!("{prefix}.bn1"), y)?;
    let y = ctx.tape.relu(y);
    let y = ctx.conv(&format!("{prefix}.conv2"), y, 1, 1)?;
    let y = ctx.bn(&format!("{prefix}.bn2"), y)?;
    let shortcut = if downsample {
        let down = format!("{prefix}.down");
        if !ctx.params.contains(&format!("{down}.conv.w")) {
            return Err(Error::Config(format!("{prefix}: downsampling block has no projection")));
        }
        let s = ctx.conv(&format!("{down}.conv"), x, 2, 0)?;
        ctx.bn(&format!("{down}.bn"), s)?
    } else {
        let cout = ctx.channels(y)?;
        if cout != cin {
            return Err(Error::Config(format!(
                "{prefix}: {cin} -> {cout} channels without a projection"
            )));
        }
        x
    };
    let s = ctx.tape.add(y, shortcut)?;
    Ok(ctx.tape.relu(s))
}

/// Mask attention: `gamma(mask) * x + beta(mask)` where the mask is repeated
/// over channels and each group is conv1×1, relu, conv1×1.
///
/// `mask` is `[N,1,H,W]` or `[1,1,H,W]` (shared by the batch).
pub fn ma_forward(ctx: &mut Ctx, prefix: &str, x: Var, mask: Var) -> Result<Var> {
    let [n, c, h, w] = ctx.tape.value(x).dims4()?;
    let [mn, mc, mh, mw] = ctx.tape.value(mask).dims4()?;
    if (mh, mw) != (h, w) || mc != 1 || (mn != n && mn != 1) {
        return Err(Error::Shape(format!(
            "mask attention: mask [{mn},{mc},{mh},{mw}] does not fit features [{n},{c},{h},{w}]"
        )));
    }
    let wc = ctx.params.get(&format!("{prefix}.gamma.conv1.w"))?.shape()[1];
    if wc != c {
        return Err(Error::Shape(format!("mask attention: {c} channels, module has {wc}")));
    }
    let m = ctx.tape.expand(mask, &[n, c, h, w])?;
    let group = |ctx: &mut Ctx, g: &str| -> Result<Var> {
        let y = ctx.conv(&format!("{prefix}.{g}.conv1"), m, 1, 0)?;
        let y = ctx.tape.relu(y);
        ctx.conv(&format!("{prefix}.{g}.conv2"), y, 1, 0)
    };
    let gamma = group(ctx, "gamma")?;
    let beta = group(ctx, "beta")?;
    let y = ctx.tape.mul(x, gamma)?;
    ctx.tape.add(y, beta)
}

/// Per-channel importance weights `sigmoid(conv(avg(x)) + conv(max(x)))`
/// with one shared 1×1 conv. Returns `[N,C,1,1]`.
pub fn iwc_weights(ctx: &mut Ctx, prefix: &str, x: Var) -> Result<Var> {
    let c = ctx.channels(x)?;
    let wc = ctx.params.get(&format!("{prefix}.conv.w"))?.shape()[1];
    if wc != c {
        return Err(Error::Shape(format!("importance weights: {c} channels, module has {wc}")));
    }
    let avg = ctx.tape.global_pool(x, PoolMode::Avg)?;
    let max = ctx.tape.global_pool(x, PoolMode::Max)?;
    let a = ctx.conv(&format!("{prefix}.conv"), avg, 1, 0)?;
    let m = ctx.conv(&format!("{prefix}.conv"), max, 1, 0)?;
    let s = ctx.tape.add(a, m)?;
    Ok(ctx.tape.sigmoid(s))
}

/// `t_iw * x_t + d_iw * x_d`, weights broadcast over space.
pub fn adaptive_fuse(tape: &mut Tape, x_t: Var, x_d: Var, t_iw: Var, d_iw: Var) -> Result<Var> {
    if tape.value(x_t).shape() != tape.value(x_d).shape() {
        return Err(Error::Shape(format!(
            "adaptive_fuse: {:?} vs {:?}",
            tape.value(x_t).shape(),
            tape.value(x_d).shape()
        )));
    }
    let a = tape.mul(x_t, t_iw)?;
    let b = tape.mul(x_d, d_iw)?;
    tape.add(a, b)
}

/// Three fully connected layers with relu between them.
pub fn head_forward(ctx: &mut Ctx, prefix: &str, features: Var) -> Result<Var> {
    let y = ctx.linear(&format!("{prefix}.fc1"), features)?;
    let y = ctx.tape.relu(y);
    let y = ctx.linear(&format!("{prefix}.fc2"), y)?;
    let y = ctx.tape.relu(y);
    ctx.linear(&format!("{prefix}.fc3"), y)
}
