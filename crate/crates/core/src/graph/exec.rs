//! The single traversal of [`GraphSpec`] used for execution and accounting.
//!
//! [`walk`] visits layers in a fixed order and delegates each operation to
//! an [`Exec`] implementation. Running it with the symbolic executor yields
//! shapes and arithmetic counts; running it with a tensor executor yields
//! activations. Both see the exact same graph.

use crate::error::Result;
use crate::graph::spec::{ConvLayer, GraphSpec, LinearLayer};

/// Which heads a pass computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadSet {
    /// Primary heatmaps and visibility logits: the deployed network.
    InferenceHeads,
    /// Every head, for loss evaluation.
    AllHeads,
}

pub(crate) trait Exec {
    /// Spatial activation (or its shape).
    type Map: Clone;
    /// Flat feature vector (or its length).
    type Vector;

    /// Convolution, then batch norm and ReLU when the layer asks for them.
    fn conv(&mut self, layer: &ConvLayer, x: &Self::Map) -> Result<Self::Map>;
    /// `relu(skip + x)`.
    fn residual(&mut self, name: &str, skip: &Self::Map, x: &Self::Map) -> Result<Self::Map>;
    fn concat(&mut self, name: &str, parts: &[&Self::Map]) -> Result<Self::Map>;
    fn upsample(&mut self, name: &str, x: &Self::Map) -> Result<Self::Map>;
    fn pool(&mut self, name: &str, x: &Self::Map) -> Result<Self::Vector>;
    fn linear(&mut self, layer: &LinearLayer, v: &Self::Vector) -> Result<Self::Vector>;
}

pub(crate) struct Outputs<M, V> {
    pub primary: M,
    pub visibility: V,
    pub aux: Option<M>,
    pub orientation: Option<V>,
    pub pose: Option<V>,
    pub segmentation: Option<M>,
    pub deep_supervision: Option<[M; 3]>,
}

fn chain<E: Exec>(e: &mut E, convs: &[ConvLayer], x: &E::Map) -> Result<E::Map> {
    let mut y = x.clone();
    for c in convs {
        y = e.conv(c, &y)?;
    }
    Ok(y)
}

pub(crate) fn walk<E: Exec>(g: &GraphSpec, e: &mut E, input: &E::Map, heads: HeadSet) -> Result<Outputs<E::Map, E::Vector>> {
    // Tier 1
    let mut x = input.clone();
    for b in g.tiers[0].units.iter().flat_map(|u| &u.blocks) {
        x = chain(e, &b.convs, &x)?;
    }
    // Tier 2: each unit feeds the next, the tier emits all unit outputs.
    let mut unit_outs = Vec::new();
    for u in &g.tiers[1].units {
        for b in &u.blocks {
            x = chain(e, &b.convs, &x)?;
        }
        unit_outs.push(x.clone());
    }
    if g.tiers[1].concat_units {
        let refs: Vec<&E::Map> = unit_outs.iter().collect();
        x = e.concat("tier2.concat", &refs)?;
    }
    // Tier 3
    if let Some(entry) = &g.tiers[2].entry {
        x = chain(e, &entry.convs, &x)?;
    }
    for b in g.tiers[2].units.iter().flat_map(|u| &u.blocks) {
        let y = chain(e, &b.convs, &x)?;
        x = if b.residual {
            e.residual(&format!("{}.add", b.name), &x, &y)?
        } else {
            y
        };
    }
    let encoded = x;

    // Decoder
    let mut stages = Vec::with_capacity(g.decoder.len());
    let mut d = encoded.clone();
    for (i, c) in g.decoder.iter().enumerate() {
        let up = e.upsample(&format!("decoder.up{i}"), &d)?;
        d = e.conv(c, &up)?;
        stages.push(d.clone());
    }
    let primary = e.conv(&g.heads.primary, &d)?;
    let pooled = e.pool("heads.pool", &encoded)?;
    let visibility = e.linear(&g.heads.visibility, &pooled)?;

    let mut out = Outputs {
        primary,
        visibility,
        aux: None,
        orientation: None,
        pose: None,
        segmentation: None,
        deep_supervision: None,
    };
    if heads == HeadSet::InferenceHeads {
        return Ok(out);
    }

    let h = &g.heads;
    out.orientation = Some(e.linear(&h.orientation, &pooled)?);
    out.pose = Some(e.linear(&h.pose, &pooled)?);

    let mut a = encoded.clone();
    for (i, c) in h.aux_decoder.iter().enumerate() {
        let up = e.upsample(&format!("aux.up{i}"), &a)?;
        a = e.conv(c, &up)?;
    }
    out.aux = Some(a);

    let spatial = chain(e, &h.spatial_path, input)?;
    let spatial_up = e.upsample("seg.up0", &spatial)?;
    let fused = e.concat("seg.concat", &[&spatial_up, &stages[0]])?;
    let fused = e.conv(&h.seg_fuse, &fused)?;
    let fused_up = e.upsample("seg.up1", &fused)?;
    out.segmentation = Some(e.conv(&h.seg_classifier, &fused_up)?);

    let [ds0, ds1, ds2] = &h.deep_supervision;
    out.deep_supervision = Some([
        e.conv(ds0, &encoded)?,
        e.conv(ds1, &stages[0])?,
        e.conv(ds2, &stages[1])?,
    ]);
    Ok(out)
}
