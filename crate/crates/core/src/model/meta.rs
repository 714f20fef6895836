use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::{softmax_batch_loss, softmax_batch_loss_grad, BatchLoss, SoftmaxSpec};
use super::tower::Tower;
use super::two_tower::TwoTowerParams;
use crate::data::{EncodedFeatures, Interaction};
use crate::error::{Error, Result};
use crate::numeric::{Checkpoint, Linear, ParamBlock, Params};

/// How a tower's final layer is presented to the affine map.
///
/// The final layer is viewed as the augmented matrix `Ũ = [W; b]` of shape
/// `(h + 1) × e`, one column per output unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapperKind {
    /// One `(h+1) × (h+1)` map shared by all `e` output units.
    #[default]
    PerUnit,
    /// One `P × P` map on the whole flattened layer, `P = (h+1)·e`.
    Dense,
}

/// `V = A·X + c·1ᵀ`, applied to the unit matrix `X` of one tower.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub weight: ParamBlock,
    /// Stored as `1 × n`.
    pub bias: ParamBlock,
}

impl AffineMap {
    pub fn identity(name: &str, n: usize) -> Self {
        AffineMap {
            weight: ParamBlock::from_values(format!("{name}.weight"), Array2::eye(n)),
            bias: ParamBlock::zeros(format!("{name}.bias"), 1, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.shape().0
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut v = self.weight.values.dot(x);
        v += &self.bias.values.t();
        v
    }
}

/// Unit matrix of a final layer: `Ũ` itself (per-unit) or `Ũ` flattened
/// row-major into one column (dense).
pub fn final_units(layer: &Linear, kind: MapperKind) -> Array2<f64> {
    let (h, e) = layer.weight.shape();
    let mut u = Array2::zeros((h + 1, e));
    u.slice_mut(s![..h, ..]).assign(&layer.weight.values);
    u.row_mut(h).assign(&layer.bias.values.row(0));
    match kind {
        MapperKind::PerUnit => u,
        MapperKind::Dense => u.into_shape_with_order(((h + 1) * e, 1)).expect("contiguous"),
    }
}

fn units_to_augmented(units: &Array2<f64>, h: usize, e: usize) -> Array2<f64> {
    units
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((h + 1, e))
        .expect("unit matrix size matches layer")
}

fn write_units(layer: &mut Linear, units: &Array2<f64>) {
    let (h, e) = layer.weight.shape();
    let u = units_to_augmented(units, h, e);
    layer.weight.values.assign(&u.slice(s![..h, ..]));
    layer.bias.values.row_mut(0).assign(&u.row(h));
}

fn add_unit_grads(layer: &mut Linear, g: &Array2<f64>) {
    let (h, e) = layer.weight.shape();
    let u = units_to_augmented(g, h, e);
    layer.weight.grad += &u.slice(s![..h, ..]);
    let mut b = layer.bias.grad.row_mut(0);
    b += &u.row(h);
}

/// The meta-learner F: one affine map per tower final layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaMapper {
    pub kind: MapperKind,
    pub user: AffineMap,
    pub item: AffineMap,
}

fn unit_len(tower: &Tower, kind: MapperKind) -> usize {
    let (h, e) = tower.final_layer().weight.shape();
    match kind {
        MapperKind::PerUnit => h + 1,
        MapperKind::Dense => (h + 1) * e,
    }
}

impl MetaMapper {
    /// Identity map sized for `theta`'s final layers.
    pub fn identity(theta: &TwoTowerParams, kind: MapperKind) -> Self {
        MetaMapper {
            kind,
            user: AffineMap::identity("mapper.user", unit_len(&theta.user, kind)),
            item: AffineMap::identity("mapper.item", unit_len(&theta.item, kind)),
        }
    }

    pub fn check_compatible(&self, theta: &TwoTowerParams) -> Result<()> {
        for (name, map, tower) in [("user", &self.user, &theta.user), ("item", &self.item, &theta.item)] {
            let n = unit_len(tower, self.kind);
            if map.weight.shape() != (n, n) || map.bias.shape() != (1, n) {
                return Err(Error::shape(
                    format!("{name} mapper"),
                    format!("({n}, {n}) weight, (1, {n}) bias"),
                    format!("{:?} weight, {:?} bias", map.weight.shape(), map.bias.shape()),
                ));
            }
        }
        Ok(())
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        ckpt.push_blocks("", self.blocks());
    }

    pub fn read_from(ckpt: &Checkpoint, theta: &TwoTowerParams, kind: MapperKind) -> Result<Self> {
        let mut m = Self::identity(theta, kind);
        ckpt.restore_into("", m.blocks_mut())?;
        Ok(m)
    }
}

impl Params for MetaMapper {
    fn blocks(&self) -> Vec<&ParamBlock> {
        vec![&self.user.weight, &self.user.bias, &self.item.weight, &self.item.bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        vec![
            &mut self.user.weight,
            &mut self.user.bias,
            &mut self.item.weight,
            &mut self.item.bias,
        ]
    }
}

/// F(θ; w): a copy of `theta_few` whose two final layers are replaced by
/// their mapped values. Every other block is copied unchanged.
pub fn meta_map(theta_few: &TwoTowerParams, w: &MetaMapper) -> Result<TwoTowerParams> {
    let mut out = theta_few.clone();
    overwrite_with_mapped(&mut out, w)?;
    out.zero_grad();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    /// `Σ_towers ‖F(θ; w)_final − θ*_final‖²`.
    pub distance: f64,
    /// `L_g(θ | batch)`; not evaluated when λ = 0.
    pub base: Option<f64>,
    /// Per-row `−log p` of the base term; empty when λ = 0.
    pub row_losses: Vec<f64>,
}

fn finish(distance: f64, base: Option<BatchLoss>, lambda_reg: f64) -> JointLoss {
    let (value, row_losses) = base.map_or((None, Vec::new()), |b| (Some(b.loss), b.row_losses));
    JointLoss {
        total: distance + lambda_reg * value.unwrap_or(0.0),
        distance,
        base: value,
        row_losses,
    }
}

fn distance_of(w: &MetaMapper, theta_few: &TwoTowerParams, theta_star: &TwoTowerParams) -> Result<[(Array2<f64>, Array2<f64>); 2]> {
    w.check_compatible(theta_few)?;
    w.check_compatible(theta_star)?;
    let diff = |map: &AffineMap, few: &Linear, star: &Linear| {
        let x = final_units(few, w.kind);
        let v = map.apply(&x);
        (v - final_units(star, w.kind), x)
    };
    Ok([
        diff(&w.user, theta_few.user.final_layer(), theta_star.user.final_layer()),
        diff(&w.item, theta_few.item.final_layer(), theta_star.item.final_layer()),
    ])
}

/// `L = ‖F(θ;w)_final − θ*_final‖² + λ·L_g(θ | batch)`.
pub fn joint_loss(
    w: &MetaMapper,
    theta_few: &TwoTowerParams,
    theta_star: &TwoTowerParams,
    features: &EncodedFeatures,
    batch: &[Interaction],
    spec: &SoftmaxSpec,
    lambda_reg: f64,
) -> Result<JointLoss> {
    let distance: f64 = distance_of(w, theta_few, theta_star)?
        .iter()
        .map(|(d, _)| d.iter().map(|x| x * x).sum::<f64>())
        .sum();
    let base = if lambda_reg > 0.0 {
        Some(softmax_batch_loss(theta_few, features, batch, spec)?)
    } else {
        None
    };
    Ok(finish(distance, base, lambda_reg))
}

/// Joint loss, accumulating `∂L/∂w` into `w` and `∂L/∂θ` into `theta_few`.
/// `theta_star` is only read.
pub fn joint_loss_grad(
    w: &mut MetaMapper,
    theta_few: &mut TwoTowerParams,
    theta_star: &TwoTowerParams,
    features: &EncodedFeatures,
    batch: &[Interaction],
    spec: &SoftmaxSpec,
    lambda_reg: f64,
) -> Result<JointLoss> {
    let [(du, xu), (di, xi)] = distance_of(w, theta_few, theta_star)?;
    let distance = du.iter().chain(di.iter()).map(|x| x * x).sum::<f64>();
    for (d, x, map, tower) in [
        (du, xu, &mut w.user, &mut theta_few.user),
        (di, xi, &mut w.item, &mut theta_few.item),
    ] {
        // V = A X + c 1ᵀ, L = ‖V − X*‖²: ∂V = 2(V − X*)
        let gv = d * 2.0;
        map.weight.grad += &gv.dot(&x.t());
        map.bias.grad += &gv.sum_axis(Axis(1)).insert_axis(Axis(0));
        let gx = map.weight.values.t().dot(&gv);
        add_unit_grads(tower.final_layer_mut(), &gx);
    }
    let base = if lambda_reg > 0.0 {
        Some(softmax_batch_loss_grad(theta_few, features, batch, spec, lambda_reg)?)
    } else {
        None
    };
    Ok(finish(distance, base, lambda_reg))
}

/// Overwrites θ's final layers with F(θ; w) in place.
pub fn overwrite_with_mapped(theta_few: &mut TwoTowerParams, w: &MetaMapper) -> Result<()> {
    w.check_compatible(theta_few)?;
    let v_user = w.user.apply(&final_units(theta_few.user.final_layer(), w.kind));
    let v_item = w.item.apply(&final_units(theta_few.item.final_layer(), w.kind));
    write_units(theta_few.user.final_layer_mut(), &v_user);
    write_units(theta_few.item.final_layer_mut(), &v_item);
    Ok(())
}
