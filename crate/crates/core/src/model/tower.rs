use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Layout, SegmentKind};
use crate::error::{Error, Result};
use crate::numeric::{Linear, Mlp, MlpCache, ParamBlock};

/// Shape of one feature segment as seen by a tower.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentShape {
    pub name: String,
    pub kind: SegmentKind,
    pub width: usize,
}

/// Architecture of one tower. Categorical and bag-of-words segments are
/// embedded into `field_dim` columns each (a bag is the value-weighted sum
/// of its token rows); continuous segments pass through as one column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub segments: Vec<SegmentShape>,
    pub field_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl TowerSpec {
    /// Hidden widths `output·2^depth, …, output·2`, each half the previous.
    pub fn halving(layout: &Layout, field_dim: usize, depth: usize, output_dim: usize) -> Self {
        TowerSpec {
            segments: shapes_of(layout),
            field_dim,
            hidden: (1..=depth).rev().map(|j| output_dim << j).collect(),
            output_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s.kind {
                SegmentKind::Continuous => s.width,
                _ => self.field_dim,
            })
            .sum()
    }

    pub fn feature_width(&self) -> usize {
        self.segments.iter().map(|s| s.width).sum()
    }
}

fn shapes_of(layout: &Layout) -> Vec<SegmentShape> {
    layout
        .segments
        .iter()
        .map(|s| SegmentShape {
            name: s.name.clone(),
            kind: s.kind,
            width: s.width,
        })
        .collect()
}

/// Where a feature column goes in the MLP input.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Route {
    /// Row `row` of embedding table `table`, added at input offset `slot`.
    Embed { table: usize, row: usize, slot: usize },
    /// Copied to input column `slot`.
    Pass { slot: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tower {
    pub spec: TowerSpec,
    embeddings: Vec<ParamBlock>,
    mlp: Mlp,
    routes: Vec<Route>,
}

/// Activations kept by [`Tower::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct TowerCache {
    rows: Vec<usize>,
    mlp: MlpCache,
}

impl Tower {
    pub fn new<R: Rng + ?Sized>(name: &str, spec: TowerSpec, rng: &mut R) -> Result<Self> {
        if spec.field_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Config(format!("{name} tower: field_dim and output_dim must be positive")));
        }
        let mut embeddings = Vec::new();
        for seg in &spec.segments {
            if seg.kind != SegmentKind::Continuous {
                embeddings.push(ParamBlock::glorot(format!("{name}.emb.{}", seg.name), seg.width, spec.field_dim, rng));
            }
        }
        let mut widths = vec![spec.input_dim()];
        widths.extend(&spec.hidden);
        widths.push(spec.output_dim);
        let mlp = Mlp::new(&format!("{name}.mlp"), &widths, rng)?;
        Self::from_parts(spec, embeddings, mlp)
    }

    /// Assembles a tower from existing blocks, checking every shape.
    pub fn from_parts(spec: TowerSpec, embeddings: Vec<ParamBlock>, mlp: Mlp) -> Result<Self> {
        let mut routes = Vec::with_capacity(spec.feature_width());
        let mut slot = 0;
        let mut table = 0;
        for seg in &spec.segments {
            match seg.kind {
                SegmentKind::Continuous => {
                    for _ in 0..seg.width {
                        routes.push(Route::Pass { slot });
                        slot += 1;
                    }
                }
                _ => {
                    let e = embeddings
                        .get(table)
                        .ok_or_else(|| Error::shape("embedding tables", table + 1, embeddings.len()))?;
                    if e.shape() != (seg.width, spec.field_dim) {
                        return Err(Error::shape(
                            format!("embedding `{}`", e.name),
                            format!("({}, {})", seg.width, spec.field_dim),
                            format!("{:?}", e.shape()),
                        ));
                    }
                    for row in 0..seg.width {
                        routes.push(Route::Embed { table, row, slot });
                    }
                    slot += spec.field_dim;
                    table += 1;
                }
            }
        }
        if table != embeddings.len() {
            return Err(Error::shape("embedding tables", table, embeddings.len()));
        }
        if mlp.input_dim() != slot {
            return Err(Error::shape("tower mlp input", slot, mlp.input_dim()));
        }
        if mlp.output_dim() != spec.output_dim {
            return Err(Error::shape("tower output", spec.output_dim, mlp.output_dim()));
        }
        Ok(Tower {
            spec,
            embeddings,
            mlp,
            routes,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn final_layer(&self) -> &Linear {
        self.mlp.final_layer()
    }

    pub fn final_layer_mut(&mut self) -> &mut Linear {
        self.mlp.final_layer_mut()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        self.embeddings.iter().chain(self.mlp.blocks()).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut out: Vec<&mut ParamBlock> = self.embeddings.iter_mut().collect();
        out.extend(self.mlp.blocks_mut());
        out
    }

    /// Errors unless `feats` has exactly the segment shapes this tower was
    /// built for.
    pub fn check_layout(&self, feats: &FeatureMatrix) -> Result<()> {
        let got = shapes_of(&feats.layout);
        if got != self.spec.segments {
            let show = |v: &[SegmentShape]| v.iter().map(|s| format!("{}:{}", s.name, s.width)).collect::<Vec<_>>().join(",");
            return Err(Error::shape("feature layout", show(&self.spec.segments), show(&got)));
        }
        Ok(())
    }

    fn input_rows(&self, feats: &FeatureMatrix, rows: &[usize]) -> Result<Array2<f64>> {
        if feats.width() != self.routes.len() {
            return Err(Error::shape("feature width", self.routes.len(), feats.width()));
        }
        let fd = self.spec.field_dim;
        let mut h = Array2::zeros((rows.len(), self.mlp.input_dim()));
        for (r, &row) in rows.iter().enumerate() {
            if row >= feats.n_rows() {
                return Err(Error::Data(format!("feature row {row} out of range ({} rows)", feats.n_rows())));
            }
            let (cols, vals) = feats.row(row);
            let mut out = h.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                match self.routes[c as usize] {
                    Route::Pass { slot } => out[slot] += v,
                    Route::Embed { table, row, slot } => {
                        let e = self.embeddings[table].values.row(row);
                        out.slice_mut(s![slot..slot + fd]).scaled_add(v, &e);
                    }
                }
            }
        }
        Ok(h)
    }

    /// Embeddings of the given feature rows, without caching.
    pub fn embed(&self, feats: &FeatureMatrix, rows: &[usize]) -> Result<Array2<f64>> {
        let h = self.input_rows(feats, rows)?;
        self.mlp.infer(h.view())
    }

    /// Embeddings of every row of `feats`.
    pub fn embed_all(&self, feats: &FeatureMatrix) -> Result<Array2<f64>> {
        let rows: Vec<usize> = (0..feats.n_rows()).collect();
        self.embed(feats, &rows)
    }

    pub fn forward(&self, feats: &FeatureMatrix, rows: &[usize]) -> Result<(Array2<f64>, TowerCache)> {
        let h = self.input_rows(feats, rows)?;
        let (out, mlp) = self.mlp.forward(h.view())?;
        Ok((
            out,
            TowerCache {
                rows: rows.to_vec(),
                mlp,
            },
        ))
    }

    /// Accumulates gradients for `grad_out = ∂L/∂embeddings`. Only the
    /// embedding rows referenced by the cached feature rows are touched.
    pub fn backward(&mut self, feats: &FeatureMatrix, cache: &TowerCache, grad_out: ArrayView2<f64>) -> Result<()> {
        let g_in = self.mlp.backward(&cache.mlp, grad_out)?;
        let fd = self.spec.field_dim;
        for (r, &row) in cache.rows.iter().enumerate() {
            let (cols, vals) = feats.row(row);
            let g = g_in.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if let Route::Embed { table, row, slot } = self.routes[c as usize] {
                    let mut dst = self.embeddings[table].grad.row_mut(row);
                    dst.scaled_add(v, &g.slice(s![slot..slot + fd]));
                }
            }
        }
        Ok(())
    }
}
