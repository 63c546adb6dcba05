use serde::{Deserialize, Serialize};

use crate::diff::{Activation, MlpSpec};
use crate::pointcloud::{InputLayout, DEFAULT_CLOUD_SIZE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingKind {
    Knn,
    Ball,
}

/// One X-Conv layer. Ball grouping runs one complete branch per radius and
/// concatenates the branch outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XConvLayerSpec {
    pub n_rep: usize,
    pub k: usize,
    pub grouping: GroupingKind,
    #[serde(default)]
    pub radii: Vec<f64>,
    pub c_delta: usize,
    #[serde(default = "default_delta_depth")]
    pub delta_depth: usize,
    /// Hidden widths of the X-transform MLP; its output is always K².
    #[serde(default)]
    pub x_mlp_widths: Vec<usize>,
    pub c_out: usize,
    /// Divisor for local coordinates. Unset means the branch radius for ball
    /// grouping and 1 for k-NN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_scale: Option<f64>,
}

fn default_delta_depth() -> usize {
    2
}

impl XConvLayerSpec {
    pub fn knn(n_rep: usize, k: usize, c_delta: usize, c_out: usize) -> Self {
        XConvLayerSpec {
            n_rep,
            k,
            grouping: GroupingKind::Knn,
            radii: Vec::new(),
            c_delta,
            delta_depth: 2,
            x_mlp_widths: vec![k * k],
            c_out,
            local_scale: None,
        }
    }

    pub fn ball(n_rep: usize, k: usize, radii: &[f64], c_delta: usize, c_out: usize) -> Self {
        XConvLayerSpec {
            grouping: GroupingKind::Ball,
            radii: radii.to_vec(),
            ..Self::knn(n_rep, k, c_delta, c_out)
        }
    }

    pub fn branches(&self) -> usize {
        match self.grouping {
            GroupingKind::Knn => 1,
            GroupingKind::Ball => self.radii.len(),
        }
    }

    /// Local coordinate divisor of branch `b`.
    pub fn local_scale(&self, b: usize) -> f64 {
        match (self.local_scale, self.grouping) {
            (Some(s), _) => s,
            (None, GroupingKind::Ball) => self.radii[b],
            (None, GroupingKind::Knn) => 1.0,
        }
    }

    pub fn c_out_total(&self) -> usize {
        self.branches() * self.c_out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.n_rep, self.k, self.c_delta, self.delta_depth, self.c_out];
        if positive.contains(&0) || self.x_mlp_widths.contains(&0) {
            return Err(Error::invalid(format!("x-conv layer {self:?}: sizes must be positive")));
        }
        if self.local_scale.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid("local_scale must be positive"));
        }
        match self.grouping {
            GroupingKind::Knn if !self.radii.is_empty() => {
                Err(Error::invalid("knn grouping takes no radii"))
            }
            GroupingKind::Ball if self.radii.is_empty() => {
                Err(Error::invalid("ball grouping needs at least one radius"))
            }
            GroupingKind::Ball
                if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0))
                    || self.radii.windows(2).any(|w| w[0] >= w[1]) =>
            {
                Err(Error::invalid(format!("radii {:?} must be positive and strictly increasing", self.radii)))
            }
            _ => Ok(()),
        }
    }

    /// MLP_δ: D → c_delta, repeated `delta_depth` times.
    pub fn delta_mlp(&self, dims: usize, act: Activation) -> MlpSpec {
        let mut widths = vec![dims];
        widths.extend(std::iter::repeat_n(self.c_delta, self.delta_depth));
        MlpSpec::new(widths, act, true)
    }

    /// X-transform MLP over the flattened K×D block, linear K² output.
    pub fn xform_mlp(&self, dims: usize, act: Activation) -> MlpSpec {
        let mut widths = vec![self.k * dims];
        widths.extend(&self.x_mlp_widths);
        widths.push(self.k * self.k);
        MlpSpec::new(widths, act, false)
    }

    /// Channels of F_* for input features of width `c_in`.
    pub fn c_star(&self, c_in: usize) -> usize {
        self.c_delta + c_in
    }

    /// Dense map from the flattened K×C_* cluster to `c_out`.
    pub fn aggregate_mlp(&self, c_in: usize, act: Activation) -> MlpSpec {
        MlpSpec::new(vec![self.k * self.c_star(c_in), self.c_out], act, true)
    }
}

/// Full segmentation network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub input_layout: InputLayout,
    #[serde(default = "default_points")]
    pub input_points: usize,
    /// Pre-processing MLP widths after the raw (x, y, v_r, sigma) input;
    /// empty disables the pre-processing network.
    #[serde(default)]
    pub pp_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub encoder: Vec<XConvLayerSpec>,
    pub decoder: Vec<XConvLayerSpec>,
    pub head_widths: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_points() -> usize {
    DEFAULT_CLOUD_SIZE
}

fn default_threshold() -> f64 {
    0.5
}

/// Channel widths flowing through a network, derived from its spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPlan {
    /// Raw per-point inputs to the pre-processing MLP (0 when disabled).
    pub pp_in: usize,
    /// Feature width at every encoder resolution, input level first.
    pub level_widths: Vec<usize>,
    pub decoder_in: Vec<usize>,
    /// Decoder outputs after the skip concatenation.
    pub decoder_out: Vec<usize>,
    pub head_in: usize,
}

impl NetworkSpec {
    /// Pre-processing + multi-scale (ball) grouping, the default configuration.
    pub fn pp_msg() -> Self {
        NetworkSpec {
            input_layout: InputLayout::default(),
            input_points: DEFAULT_CLOUD_SIZE,
            pp_widths: vec![32, 32],
            activation: Activation::Elu,
            encoder: vec![
                XConvLayerSpec::ball(384, 8, &[2.0, 5.0], 16, 48),
                XConvLayerSpec::ball(96, 12, &[10.0], 32, 96),
                XConvLayerSpec::ball(24, 16, &[25.0], 32, 192),
            ],
            decoder: vec![
                XConvLayerSpec::ball(96, 16, &[25.0], 32, 96),
                XConvLayerSpec::ball(384, 12, &[10.0], 32, 48),
                XConvLayerSpec::ball(1200, 8, &[5.0], 16, 48),
            ],
            head_widths: vec![96, 2],
            threshold: 0.5,
        }
    }

    /// k-NN grouping without pre-processing.
    pub fn vanilla() -> Self {
        let base = Self::pp_msg();
        let to_knn = |l: &XConvLayerSpec| XConvLayerSpec {
            grouping: GroupingKind::Knn,
            radii: Vec::new(),
            c_out: l.c_out_total(),
            local_scale: l.radii.last().copied(),
            ..l.clone()
        };
        NetworkSpec {
            pp_widths: Vec::new(),
            encoder: base.encoder.iter().map(to_knn).collect(),
            decoder: base.decoder.iter().map(to_knn).collect(),
            ..base
        }
    }

    pub fn pp_only() -> Self {
        NetworkSpec {
            pp_widths: Self::pp_msg().pp_widths,
            ..Self::vanilla()
        }
    }

    pub fn msg_only() -> Self {
        NetworkSpec {
            pp_widths: Vec::new(),
            ..Self::pp_msg()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "pp_msg" => Self::pp_msg(),
            "vanilla" => Self::vanilla(),
            "pp" => Self::pp_only(),
            "msg" => Self::msg_only(),
            _ => return None,
        })
    }

    pub fn pp_enabled(&self) -> bool {
        !self.pp_widths.is_empty()
    }

    pub fn coord_dims(&self) -> usize {
        self.input_layout.coord_dims()
    }

    pub fn pp_mlp(&self) -> Option<MlpSpec> {
        self.pp_enabled().then(|| {
            let mut widths = vec![self.input_layout.raw_fields().len()];
            widths.extend(&self.pp_widths);
            MlpSpec::new(widths, self.activation, true)
        })
    }

    pub fn head_mlp(&self, head_in: usize) -> MlpSpec {
        let mut widths = vec![head_in];
        widths.extend(&self.head_widths);
        MlpSpec::new(widths, self.activation, false)
    }

    /// Point counts at every encoder depth, input level first.
    pub fn resolutions(&self) -> Vec<usize> {
        std::iter::once(self.input_points)
            .chain(self.encoder.iter().map(|l| l.n_rep))
            .collect()
    }

    pub fn channel_plan(&self) -> ChannelPlan {
        let pp_in = if self.pp_enabled() { self.input_layout.raw_fields().len() } else { 0 };
        let input_width = match self.pp_widths.last() {
            Some(&w) => w,
            None => self.input_layout.feature_dims(),
        };
        let mut level_widths = vec![input_width];
        level_widths.extend(self.encoder.iter().map(XConvLayerSpec::c_out_total));
        let depth = self.encoder.len();
        let mut decoder_in = Vec::new();
        let mut decoder_out = Vec::new();
        let mut current = *level_widths.last().unwrap();
        for (j, layer) in self.decoder.iter().enumerate() {
            decoder_in.push(current);
            let skip = level_widths.get(depth.wrapping_sub(1 + j)).copied().unwrap_or(0);
            current = layer.c_out_total() + skip;
            decoder_out.push(current);
        }
        ChannelPlan {
            pp_in,
            level_widths,
            decoder_in,
            decoder_out,
            head_in: current,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input_layout.validate()?;
        if self.input_points == 0 {
            return Err(Error::invalid("input_points must be positive"));
        }
        if self.pp_widths.contains(&0) {
            return Err(Error::invalid("pre-processing widths must be positive"));
        }
        if self.encoder.is_empty() {
            return Err(Error::invalid("network needs at least one encoder layer"));
        }
        for l in self.encoder.iter().chain(&self.decoder) {
            l.validate()?;
        }
        let res = self.resolutions();
        if res.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(format!("encoder resolutions {res:?} must strictly decrease")));
        }
        if self.decoder.len() != self.encoder.len() {
            return Err(Error::invalid("decoder must mirror the encoder depth"));
        }
        for (j, layer) in self.decoder.iter().enumerate() {
            let target = res[res.len() - 2 - j];
            let source = res[res.len() - 1 - j];
            if layer.n_rep != target {
                return Err(Error::invalid(format!(
                    "decoder layer {j} has n_rep {} but mirrors resolution {target}",
                    layer.n_rep
                )));
            }
            if layer.grouping == GroupingKind::Knn && layer.k > source {
                return Err(Error::invalid(format!("decoder layer {j}: k={} exceeds {source} source points", layer.k)));
            }
        }
        for (l, layer) in self.encoder.iter().enumerate() {
            if layer.grouping == GroupingKind::Knn && layer.k > res[l] {
                return Err(Error::invalid(format!("encoder layer {l}: k={} exceeds {} points", layer.k, res[l])));
            }
        }
        if self.head_widths.last() != Some(&2) || self.head_widths.contains(&0) {
            return Err(Error::invalid("head widths must be positive and end with 2"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must be in (0, 1)"));
        }
        Ok(())
    }
}
