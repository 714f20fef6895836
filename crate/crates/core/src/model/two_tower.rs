use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tower::{Tower, TowerSpec};
use crate::data::EncodedFeatures;
use crate::error::{Error, Result};
use crate::numeric::{Checkpoint, ParamBlock, Params};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub user: TowerSpec,
    pub item: TowerSpec,
}

impl ModelSpec {
    pub fn for_features(features: &EncodedFeatures, embedding_dim: usize, field_dim: usize, depth: usize) -> Self {
        ModelSpec {
            user: TowerSpec::halving(&features.users.layout, field_dim, depth, embedding_dim),
            item: TowerSpec::halving(&features.items.layout, field_dim, depth, embedding_dim),
        }
    }
}

/// Parameters θ of the two-tower scorer `s(u, i) = ⟨g_u(x_u), g_i(y_i)⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoTowerParams {
    pub user: Tower,
    pub item: Tower,
}

impl TwoTowerParams {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user = Tower::new("user", spec.user.clone(), &mut rng)?;
        let item = Tower::new("item", spec.item.clone(), &mut rng)?;
        Self::from_towers(user, item)
    }

    pub fn from_towers(user: Tower, item: Tower) -> Result<Self> {
        if user.output_dim() != item.output_dim() {
            return Err(Error::shape("tower embedding dims", user.output_dim(), item.output_dim()));
        }
        Ok(TwoTowerParams { user, item })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            user: self.user.spec.clone(),
            item: self.item.spec.clone(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.user.output_dim()
    }

    pub fn check_features(&self, features: &EncodedFeatures) -> Result<()> {
        self.user.check_layout(&features.users)?;
        self.item.check_layout(&features.items)
    }

    /// Inner product of the two tower outputs for one pair.
    pub fn score(&self, features: &EncodedFeatures, user: u32, item: u32) -> Result<f64> {
        let q = self.user.embed(&features.users, &[user as usize])?;
        let e = self.item.embed(&features.items, &[item as usize])?;
        Ok(q.row(0).dot(&e.row(0)))
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.push_blocks(prefix, self.blocks());
    }

    pub fn read_from(ckpt: &Checkpoint, prefix: &str, spec: &ModelSpec) -> Result<Self> {
        // seed is irrelevant: every value is overwritten
        let mut p = Self::new(spec, 0)?;
        ckpt.restore_into(prefix, p.blocks_mut())?;
        Ok(p)
    }
}

impl Params for TwoTowerParams {
    fn blocks(&self) -> Vec<&ParamBlock> {
        let mut v = self.user.blocks();
        v.extend(self.item.blocks());
        v
    }

    fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut v = self.user.blocks_mut();
        v.extend(self.item.blocks_mut());
        v
    }
}

/// Read-only many-shot parameters. The fingerprint taken at construction is
/// re-checked by [`FrozenParams::verify`].
#[derive(Clone, Debug)]
pub struct FrozenParams {
    params: TwoTowerParams,
    fingerprint: [u8; 32],
}

impl FrozenParams {
    pub fn new(params: TwoTowerParams) -> Self {
        let fingerprint = params.fingerprint();
        FrozenParams { params, fingerprint }
    }

    /// Rebuilds from a parameter set and a previously recorded fingerprint.
    pub fn from_parts(params: TwoTowerParams, fingerprint: [u8; 32]) -> Self {
        FrozenParams { params, fingerprint }
    }

    pub fn into_parts(self) -> (TwoTowerParams, [u8; 32]) {
        (self.params, self.fingerprint)
    }

    pub fn get(&self) -> &TwoTowerParams {
        &self.params
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn verify(&self) -> Result<()> {
        if self.params.fingerprint() == self.fingerprint {
            Ok(())
        } else {
            Err(Error::FrozenParamsModified)
        }
    }
}
