use std::collections::HashMap;

use crate::conv::{
    add, batchnorm, comb_dilated_conv_packed, concat_channels, conv2d_packed_counted, conv2d_ref_counted,
    fold_batchnorm, global_avg_pool, linear, relu_inplace, upsample_nearest_2x, OpCounter,
};
use crate::error::{shape_err, Result};
use crate::graph::exec::{walk, Exec, HeadSet, Outputs};
use crate::graph::spec::{ConvLayer, GraphSpec, LinearLayer};
use crate::graph::weights::WeightStore;
use crate::tensor::{pack_kernels, Dims, Layout, PackedWeights, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Planar tensors, direct convolution, unfolded batch norm.
    Reference,
    /// Interleaved tensors, packed kernels with folded batch norm, comb dilation.
    Optimized,
}

/// Network outputs, all planar. Optional heads are present only for
/// [`HeadSet::AllHeads`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadsOutput {
    /// `16 x H/2 x W/2` keypoint logits.
    pub primary: Tensor,
    /// 16 keypoint logits then left / right hand presence.
    pub visibility: Vec<f32>,
    /// `18 x H/2 x W/2`.
    pub aux: Option<Tensor>,
    /// `2 x 8`, hand-major.
    pub orientation: Option<Vec<f32>>,
    /// `2 x 9`, hand-major.
    pub pose: Option<Vec<f32>>,
    /// `3 x H/2 x W/2`.
    pub segmentation: Option<Tensor>,
    /// Heatmap logits at 1/8, 1/4, 1/2 resolution.
    pub deep_supervision: Option<[Tensor; 3]>,
}

impl HeadsOutput {
    fn from_outputs(o: Outputs<Tensor, Vec<f32>>) -> Self {
        let planar = |t: Tensor| t.to_layout(Layout::ChannelPlanar);
        Self {
            primary: planar(o.primary),
            visibility: o.visibility,
            aux: o.aux.map(planar),
            orientation: o.orientation,
            pose: o.pose,
            segmentation: o.segmentation.map(planar),
            deep_supervision: o.deep_supervision.map(|d| d.map(planar)),
        }
    }

    /// Largest absolute difference over every head present in both.
    pub fn max_abs_diff(&self, other: &HeadsOutput) -> Result<f32> {
        let vec_diff = |a: &[f32], b: &[f32]| -> Result<f32> {
            if a.len() != b.len() {
                return shape_err("head lengths differ");
            }
            Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max))
        };
        let mut m = self.primary.max_abs_diff(&other.primary)?;
        m = m.max(vec_diff(&self.visibility, &other.visibility)?);
        if let (Some(a), Some(b)) = (&self.aux, &other.aux) {
            m = m.max(a.max_abs_diff(b)?);
        }
        if let (Some(a), Some(b)) = (&self.orientation, &other.orientation) {
            m = m.max(vec_diff(a, b)?);
        }
        if let (Some(a), Some(b)) = (&self.pose, &other.pose) {
            m = m.max(vec_diff(a, b)?);
        }
        if let (Some(a), Some(b)) = (&self.segmentation, &other.segmentation) {
            m = m.max(a.max_abs_diff(b)?);
        }
        if let (Some(a), Some(b)) = (&self.deep_supervision, &other.deep_supervision) {
            for (x, y) in a.iter().zip(b) {
                m = m.max(x.max_abs_diff(y)?);
            }
        }
        Ok(m)
    }
}

struct ReferenceExec<'a> {
    ws: &'a WeightStore,
    counter: OpCounter,
    trace: Vec<(String, Dims)>,
}

impl Exec for ReferenceExec<'_> {
    type Map = Tensor;
    type Vector = Vec<f32>;

    fn conv(&mut self, layer: &ConvLayer, x: &Tensor) -> Result<Tensor> {
        let w = self.ws.conv_weights(layer)?;
        let b = self.ws.conv_bias(layer)?;
        let mut y = conv2d_ref_counted(x, &w, b.as_deref(), &layer.spec, &mut self.counter)?;
        if let Some(bn) = self.ws.bn(layer)? {
            y = batchnorm(&y, &bn, &mut self.counter)?;
        }
        if layer.relu {
            relu_inplace(&mut y);
        }
        self.trace.push((layer.name.clone(), y.dims()));
        Ok(y)
    }

    fn residual(&mut self, _name: &str, skip: &Tensor, x: &Tensor) -> Result<Tensor> {
        let mut y = add(skip, x, &mut self.counter)?;
        relu_inplace(&mut y);
        Ok(y)
    }

    fn concat(&mut self, _name: &str, parts: &[&Tensor]) -> Result<Tensor> {
        concat_channels(parts)
    }

    fn upsample(&mut self, _name: &str, x: &Tensor) -> Result<Tensor> {
        Ok(upsample_nearest_2x(x))
    }

    fn pool(&mut self, _name: &str, x: &Tensor) -> Result<Vec<f32>> {
        Ok(global_avg_pool(x, &mut self.counter))
    }

    fn linear(&mut self, layer: &LinearLayer, v: &Vec<f32>) -> Result<Vec<f32>> {
        let (w, b) = self.ws.linear(layer)?;
        linear(v, w, b, &mut self.counter)
    }
}

struct PreparedConv {
    packed: PackedWeights,
    bias: Option<Vec<f32>>,
}

/// Weights folded and packed once for the optimized backend.
pub struct PreparedNet<'a> {
    graph: &'a GraphSpec,
    ws: &'a WeightStore,
    convs: HashMap<String, PreparedConv>,
    parallel: bool,
}

impl<'a> PreparedNet<'a> {
    /// Folds batch norm and packs every convolution whose weights are in
    /// `ws`. Layers absent from the store fail at use.
    pub fn new(graph: &'a GraphSpec, ws: &'a WeightStore, lane_width: usize) -> Result<Self> {
        let mut convs = HashMap::new();
        for layer in graph.conv_layers() {
            if ws.get(&format!("{}.weight", layer.name)).is_err() {
                continue;
            }
            let w = ws.conv_weights(layer)?;
            let b = ws.conv_bias(layer)?;
            let (w, bias) = match ws.bn(layer)? {
                Some(bn) => {
                    let (fw, fb) = fold_batchnorm(&w, b.as_deref(), &bn)?;
                    (fw, Some(fb))
                }
                None => (w, b),
            };
            let packed = pack_kernels(&w, layer.spec.groups, lane_width)?;
            convs.insert(layer.name.clone(), PreparedConv { packed, bias });
        }
        Ok(Self {
            graph,
            ws,
            convs,
            parallel: false,
        })
    }

    /// Spread convolution rows over the rayon pool.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Adds `delta` to every packed kernel value (fault injection).
    pub fn perturb(&mut self, delta: f32) {
        for c in self.convs.values_mut() {
            c.packed.data.iter_mut().for_each(|v| *v += delta);
        }
    }

    pub fn forward(&self, image: &Tensor, heads: HeadSet) -> Result<HeadsOutput> {
        Ok(self.forward_counted(image, heads)?.0)
    }

    pub fn forward_counted(&self, image: &Tensor, heads: HeadSet) -> Result<(HeadsOutput, OpCounter)> {
        check_image(self.graph, image)?;
        let x = image.to_layout(Layout::ChannelInterleaved);
        let mut e = OptimizedExec {
            net: self,
            counter: OpCounter::default(),
        };
        let out = walk(self.graph, &mut e, &x, heads)?;
        Ok((HeadsOutput::from_outputs(out), e.counter))
    }
}

struct OptimizedExec<'n, 'a> {
    net: &'n PreparedNet<'a>,
    counter: OpCounter,
}

impl Exec for OptimizedExec<'_, '_> {
    type Map = Tensor;
    type Vector = Vec<f32>;

    fn conv(&mut self, layer: &ConvLayer, x: &Tensor) -> Result<Tensor> {
        let p = self
            .net
            .convs
            .get(&layer.name)
            .ok_or_else(|| crate::Error::MissingWeights(format!("{}.weight", layer.name)))?;
        let mut spec = layer.spec;
        spec.has_bias = p.bias.is_some();
        let bias = p.bias.as_deref();
        let par = self.net.parallel;
        let mut y = if spec.dilation > 1 && spec.stride == 1 {
            comb_dilated_conv_packed(x, &p.packed, bias, &spec, &mut self.counter, par)?
        } else {
            conv2d_packed_counted(x, &p.packed, bias, &spec, &mut self.counter, par)?
        };
        if layer.relu {
            relu_inplace(&mut y);
        }
        Ok(y)
    }

    fn residual(&mut self, _name: &str, skip: &Tensor, x: &Tensor) -> Result<Tensor> {
        let mut y = add(skip, x, &mut self.counter)?;
        relu_inplace(&mut y);
        Ok(y)
    }

    fn concat(&mut self, _name: &str, parts: &[&Tensor]) -> Result<Tensor> {
        concat_channels(parts)
    }

    fn upsample(&mut self, _name: &str, x: &Tensor) -> Result<Tensor> {
        Ok(upsample_nearest_2x(x))
    }

    fn pool(&mut self, _name: &str, x: &Tensor) -> Result<Vec<f32>> {
        Ok(global_avg_pool(x, &mut self.counter))
    }

    fn linear(&mut self, layer: &LinearLayer, v: &Vec<f32>) -> Result<Vec<f32>> {
        let (w, b) = self.net.ws.linear(layer)?;
        linear(v, w, b, &mut self.counter)
    }
}

fn check_image(g: &GraphSpec, image: &Tensor) -> Result<()> {
    let d = image.dims();
    let (h, w) = g.input_hw;
    if d != Dims::chw(1, h, w) {
        return shape_err(format!("image is {d}, network expects 1x{h}x{w}"));
    }
    Ok(())
}

/// Runs the reference backend and returns its arithmetic tally.
pub fn forward_reference_counted(
    g: &GraphSpec,
    ws: &WeightStore,
    image: &Tensor,
    heads: HeadSet,
) -> Result<(HeadsOutput, OpCounter)> {
    let (out, counter, _) = reference_pass(g, ws, image, heads)?;
    Ok((out, counter))
}

/// Output shape of every convolution observed while executing the reference
/// backend.
pub fn observed_shapes(g: &GraphSpec, ws: &WeightStore, image: &Tensor, heads: HeadSet) -> Result<Vec<(String, Dims)>> {
    Ok(reference_pass(g, ws, image, heads)?.2)
}

fn reference_pass(
    g: &GraphSpec,
    ws: &WeightStore,
    image: &Tensor,
    heads: HeadSet,
) -> Result<(HeadsOutput, OpCounter, Vec<(String, Dims)>)> {
    check_image(g, image)?;
    let x = image.to_layout(Layout::ChannelPlanar);
    let mut e = ReferenceExec {
        ws,
        counter: OpCounter::default(),
        trace: Vec::new(),
    };
    let out = walk(g, &mut e, &x, heads)?;
    Ok((HeadsOutput::from_outputs(out), e.counter, e.trace))
}

/// One forward pass on `backend`. `image` is `1 x H x W`.
pub fn forward(g: &GraphSpec, ws: &WeightStore, image: &Tensor, backend: Backend, heads: HeadSet) -> Result<HeadsOutput> {
    match backend {
        Backend::Reference => Ok(forward_reference_counted(g, ws, image, heads)?.0),
        Backend::Optimized => PreparedNet::new(g, ws, g.config.lane_width)?.forward(image, heads),
    }
}
