//! Declarative description of the network.
//!
//! Encoder: three tiers. Tier 1 is one strided 3x3 Conv-BN-ReLU. Tier 2 is
//! two 1-3-1 bottleneck units whose outputs are concatenated (the tier input
//! is not). Tier 3 is a strided entry conv followed by dilated ladder units,
//! each a chain of residual bottlenecks with dilations 1, 2, 3, 4.
//!
//! Decoder: two (upsample, channel-wise 3x3) stages back to half resolution,
//! then a channel-wise 1x1 heatmap head. Training-only heads hang off the
//! encoder and decoder: an ungrouped auxiliary keypoint decoder, pooled
//! classification heads, a spatial-path segmentation head and three
//! deep-supervision heatmap heads.

use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::conv::{ConvSpec, Padding};
use crate::error::{config_err, Result};

pub const HANDS: usize = 2;
pub const KEYPOINTS_PER_HAND: usize = 8;
pub const NUM_KEYPOINTS: usize = HANDS * KEYPOINTS_PER_HAND;
pub const AUX_KEYPOINTS_PER_HAND: usize = 9;
pub const NUM_AUX_KEYPOINTS: usize = HANDS * AUX_KEYPOINTS_PER_HAND;
/// 16 keypoint flags followed by left-hand and right-hand presence.
pub const NUM_VISIBILITY: usize = NUM_KEYPOINTS + HANDS;
pub const ORIENTATION_CLASSES: usize = 8;
pub const POSE_CLASSES: usize = 9;
pub const SEG_CLASSES: usize = 3;

const SPATIAL_PATH: [usize; 3] = [8, 16, 32];
const SEG_FUSE: usize = 16;
const AUX_DECODER: usize = 32;

/// One convolution, optionally followed by batch norm and ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
    pub bn: bool,
    pub relu: bool,
}

impl ConvLayer {
    fn conv_bn_relu(name: impl Into<String>, spec: ConvSpec) -> Self {
        Self {
            name: name.into(),
            spec: spec.bias(false),
            bn: true,
            relu: true,
        }
    }

    fn conv_bn(name: impl Into<String>, spec: ConvSpec) -> Self {
        Self {
            relu: false,
            ..Self::conv_bn_relu(name, spec)
        }
    }

    fn head(name: impl Into<String>, spec: ConvSpec) -> Self {
        Self {
            name: name.into(),
            spec: spec.bias(true),
            bn: false,
            relu: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    ConvBnRelu,
    /// 1x1 reduce, 3x3 grouped, 1x1 expand; no skip.
    Bottleneck131,
    /// 1x1 reduce, 3x3 grouped dilated, 1x1 expand, additive skip.
    DilatedBottleneckResNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub kind: BlockKind,
    pub convs: Vec<ConvLayer>,
    pub dilation: usize,
    pub residual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub name: String,
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub index: usize,
    /// Downsampling block run before the units (Tier 3 only).
    pub entry: Option<BlockSpec>,
    pub units: Vec<UnitSpec>,
    /// Concatenate unit outputs (Tier 2) instead of chaining to the last one.
    pub concat_units: bool,
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpecs {
    /// Channel-wise 1x1 over the last decoder stage.
    pub primary: ConvLayer,
    pub visibility: LinearLayer,
    pub orientation: LinearLayer,
    pub pose: LinearLayer,
    /// Ungrouped decoder for the auxiliary keypoints: two (upsample, conv) stages.
    pub aux_decoder: Vec<ConvLayer>,
    /// Three stride-2 Conv-BN-ReLU layers from the input image.
    pub spatial_path: Vec<ConvLayer>,
    pub seg_fuse: ConvLayer,
    pub seg_classifier: ConvLayer,
    /// Heatmap heads at 1/8, 1/4 and 1/2 resolution.
    pub deep_supervision: [ConvLayer; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub input_hw: (usize, usize),
    pub tiers: [TierSpec; 3],
    /// Each stage is `upsample_nearest_2x` followed by this conv.
    pub decoder: Vec<ConvLayer>,
    pub heads: HeadSpecs,
    pub config: NetworkConfig,
}

fn conv(i: usize, o: usize, k: usize) -> ConvSpec {
    ConvSpec::new(i, o, k).padding(Padding::Same)
}

/// Builds the architecture for `cfg`.
pub fn build_graph(cfg: &NetworkConfig) -> Result<GraphSpec> {
    let [h, w] = cfg.resolution;
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return config_err(format!("resolution {h}x{w} must be positive and divisible by 8"));
    }
    let [c1, c2, c3] = cfg.tier_channels;
    let (g2, g3) = (cfg.tier2_groups, cfg.tier3_groups);
    let (r2, r3) = (cfg.tier2_bottleneck, cfg.tier3_bottleneck);
    if c2 % 2 != 0 {
        return config_err(format!("tier-2 channels {c2} must split evenly over two units"));
    }
    if c3 % NUM_KEYPOINTS != 0 {
        return config_err(format!("tier-3 channels {c3} must be a multiple of {NUM_KEYPOINTS} for the decoder"));
    }
    if cfg.ladder_dilations.is_empty() || cfg.ladder_units == 0 {
        return config_err("tier 3 needs at least one ladder unit with one dilation");
    }
    if cfg.lane_width == 0 {
        return config_err("lane_width must be positive");
    }
    let u2 = c2 / 2;

    let tier1 = TierSpec {
        index: 1,
        entry: None,
        units: vec![UnitSpec {
            name: "tier1.unit0".into(),
            blocks: vec![BlockSpec {
                name: "tier1.unit0.block0".into(),
                kind: BlockKind::ConvBnRelu,
                convs: vec![ConvLayer::conv_bn_relu("tier1.conv", conv(1, c1, 3).stride(2))],
                dilation: 1,
                residual: false,
            }],
        }],
        concat_units: false,
        out_channels: c1,
        stride: 2,
    };

    let tier2_units = (0..2)
        .map(|u| {
            let name = format!("tier2.unit{u}");
            let cin = if u == 0 { c1 } else { u2 };
            let stride = if u == 0 { 2 } else { 1 };
            UnitSpec {
                blocks: vec![BlockSpec {
                    name: format!("{name}.block0"),
                    kind: BlockKind::Bottleneck131,
                    convs: vec![
                        ConvLayer::conv_bn_relu(format!("{name}.reduce"), conv(cin, r2, 1).groups(g2)),
                        ConvLayer::conv_bn_relu(format!("{name}.grouped"), conv(r2, r2, 3).groups(g2).stride(stride)),
                        ConvLayer::conv_bn_relu(format!("{name}.expand"), conv(r2, u2, 1).groups(g2)),
                    ],
                    dilation: 1,
                    residual: false,
                }],
                name,
            }
        })
        .collect();
    let tier2 = TierSpec {
        index: 2,
        entry: None,
        units: tier2_units,
        concat_units: true,
        out_channels: c2,
        stride: 2,
    };

    let entry = BlockSpec {
        name: "tier3.entry".into(),
        kind: BlockKind::ConvBnRelu,
        convs: vec![ConvLayer::conv_bn_relu("tier3.entry", conv(c2, c3, 3).groups(g3).stride(2))],
        dilation: 1,
        residual: false,
    };
    let tier3_units = (0..cfg.ladder_units)
        .map(|u| {
            let uname = format!("tier3.ladder{u}");
            let blocks = cfg
                .ladder_dilations
                .iter()
                .enumerate()
                .map(|(b, &d)| {
                    let name = format!("{uname}.block{b}");
                    BlockSpec {
                        kind: BlockKind::DilatedBottleneckResNet,
                        convs: vec![
                            ConvLayer::conv_bn_relu(format!("{name}.reduce"), conv(c3, r3, 1).groups(g3)),
                            ConvLayer::conv_bn_relu(format!("{name}.dilated"), conv(r3, r3, 3).groups(g3).dilation(d)),
                            ConvLayer::conv_bn(format!("{name}.expand"), conv(r3, c3, 1).groups(g3)),
                        ],
                        name,
                        dilation: d,
                        residual: true,
                    }
                })
                .collect();
            UnitSpec { name: uname, blocks }
        })
        .collect();
    let tier3 = TierSpec {
        index: 3,
        entry: Some(entry),
        units: tier3_units,
        concat_units: false,
        out_channels: c3,
        stride: 2,
    };

    let k = NUM_KEYPOINTS;
    let decoder = vec![
        ConvLayer::conv_bn_relu("decoder.stage0", conv(c3, k, 3).groups(k)),
        ConvLayer::conv_bn_relu("decoder.stage1", conv(k, k, 3).groups(k)),
    ];

    let [s0, s1, s2] = SPATIAL_PATH;
    let heads = HeadSpecs {
        primary: ConvLayer::head("heads.primary", conv(k, k, 1).groups(k)),
        visibility: LinearLayer {
            name: "heads.visibility".into(),
            in_features: c3,
            out_features: NUM_VISIBILITY,
        },
        orientation: LinearLayer {
            name: "heads.orientation".into(),
            in_features: c3,
            out_features: HANDS * ORIENTATION_CLASSES,
        },
        pose: LinearLayer {
            name: "heads.pose".into(),
            in_features: c3,
            out_features: HANDS * POSE_CLASSES,
        },
        aux_decoder: vec![
            ConvLayer::conv_bn_relu("aux.stage0", conv(c3, AUX_DECODER, 3)),
            ConvLayer::head("aux.stage1", conv(AUX_DECODER, NUM_AUX_KEYPOINTS, 3)),
        ],
        spatial_path: vec![
            ConvLayer::conv_bn_relu("seg.spatial0", conv(1, s0, 3).stride(2)),
            ConvLayer::conv_bn_relu("seg.spatial1", conv(s0, s1, 3).stride(2)),
            ConvLayer::conv_bn_relu("seg.spatial2", conv(s1, s2, 3).stride(2)),
        ],
        seg_fuse: ConvLayer::conv_bn_relu("seg.fuse", conv(s2 + k, SEG_FUSE, 1)),
        seg_classifier: ConvLayer::head("seg.classifier", conv(SEG_FUSE, SEG_CLASSES, 1)),
        deep_supervision: [
            ConvLayer::head("ds.eighth", conv(c3, k, 1)),
            ConvLayer::head("ds.quarter", conv(k, k, 1)),
            ConvLayer::head("ds.half", conv(k, k, 1)),
        ],
    };

    let g = GraphSpec {
        input_hw: (h, w),
        tiers: [tier1, tier2, tier3],
        decoder,
        heads,
        config: cfg.clone(),
    };
    for layer in g.conv_layers() {
        layer.spec.validate()?;
    }
    Ok(g)
}

/// Findings of [`validate_config`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Convolutions whose filters-per-group is not a multiple of the lane width.
    pub alignment_warnings: Vec<String>,
    /// Departures from the reference architecture's structural invariants.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.alignment_warnings.is_empty() && self.violations.is_empty()
    }
}

/// Checks lane alignment of the deployed convolutions and the architectural
/// invariants. Reports; never fails.
///
/// Channel-wise convolutions (one filter per group) are exempt from the
/// alignment check. Training-only heads are not deployed and not checked.
pub fn validate_config(g: &GraphSpec, lane_width: usize) -> ValidationReport {
    let mut r = ValidationReport::default();
    let lane = lane_width.max(1);
    for layer in g.inference_conv_layers() {
        let fpg = layer.spec.out_per_group();
        if fpg > 1 && fpg % lane != 0 {
            r.alignment_warnings.push(format!(
                "{}: {fpg} filters per group is not a multiple of lane width {lane}",
                layer.name
            ));
        }
    }

    let (h, w) = g.input_hw;
    if h % 8 != 0 || w % 8 != 0 {
        r.violations.push(format!("input {h}x{w} not divisible by 8"));
    }
    for (tier, expect) in g.tiers.iter().zip([16, 32, 64]) {
        if tier.out_channels != expect {
            r.violations.push(format!(
                "tier {} outputs {} channels, reference is {expect}",
                tier.index, tier.out_channels
            ));
        }
    }
    let t1 = &g.tiers[0];
    if t1.units.len() != 1 || t1.units[0].blocks.len() != 1 || t1.units[0].blocks[0].convs.len() != 1 {
        r.violations.push("tier 1 must be a single convolution".into());
    }
    let t2 = &g.tiers[1];
    if t2.units.len() != 2 || !t2.concat_units {
        r.violations.push("tier 2 must concatenate exactly two units".into());
    }
    for l in t2.units.iter().flat_map(|u| &u.blocks).flat_map(|b| &b.convs) {
        if l.spec.groups != 4 {
            r.violations.push(format!("{}: tier-2 groups {} != 4", l.name, l.spec.groups));
        }
    }
    let t3 = &g.tiers[2];
    for l in t3.entry.iter().chain(t3.units.iter().flat_map(|u| &u.blocks)).flat_map(|b| &b.convs) {
        if l.spec.groups != 8 {
            r.violations.push(format!("{}: tier-3 groups {} != 8", l.name, l.spec.groups));
        }
    }
    for u in &t3.units {
        let d: Vec<usize> = u.blocks.iter().map(|b| b.dilation).collect();
        if d != [1, 2, 3, 4] {
            r.violations.push(format!("{}: ladder dilations {d:?} != [1, 2, 3, 4]", u.name));
        }
        for b in &u.blocks {
            if !b.residual || b.convs.len() != 3 {
                r.violations.push(format!("{}: ladder blocks must be residual 1-3-1 bottlenecks", b.name));
            }
        }
    }
    for l in g.decoder.iter().chain(std::iter::once(&g.heads.primary)) {
        if l.spec.groups != l.spec.out_ch {
            r.violations.push(format!("{}: decoder conv must be channel-wise", l.name));
        }
    }
    for l in &g.heads.aux_decoder {
        if l.spec.groups != 1 {
            r.violations.push(format!("{}: auxiliary decoder must not be grouped", l.name));
        }
    }
    r
}

impl GraphSpec {
    pub fn tier_output_dims(&self) -> [(usize, usize, usize); 3] {
        let (h, w) = self.input_hw;
        [
            (self.tiers[0].out_channels, h / 2, w / 2),
            (self.tiers[1].out_channels, h / 4, w / 4),
            (self.tiers[2].out_channels, h / 8, w / 8),
        ]
    }

    pub fn heatmap_hw(&self) -> (usize, usize) {
        (self.input_hw.0 / 2, self.input_hw.1 / 2)
    }

    /// Spatial sizes of the deep-supervision heads, coarse to fine.
    pub fn deep_supervision_hw(&self) -> [(usize, usize); 3] {
        let (h, w) = self.input_hw;
        [(h / 8, w / 8), (h / 4, w / 4), (h / 2, w / 2)]
    }

    fn encoder_conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.tiers.iter().flat_map(|t| {
            t.entry
                .iter()
                .chain(t.units.iter().flat_map(|u| &u.blocks))
                .flat_map(|b| &b.convs)
        })
    }

    /// Convolutions that run on device: encoder, decoder, primary head.
    pub fn inference_conv_layers(&self) -> Vec<&ConvLayer> {
        self.encoder_conv_layers()
            .chain(&self.decoder)
            .chain(std::iter::once(&self.heads.primary))
            .collect()
    }

    pub fn conv_layers(&self) -> Vec<&ConvLayer> {
        let h = &self.heads;
        self.inference_conv_layers()
            .into_iter()
            .chain(&h.aux_decoder)
            .chain(&h.spatial_path)
            .chain([&h.seg_fuse, &h.seg_classifier])
            .chain(&h.deep_supervision)
            .collect()
    }

    pub fn linear_layers(&self) -> [&LinearLayer; 3] {
        [&self.heads.visibility, &self.heads.orientation, &self.heads.pose]
    }
}
