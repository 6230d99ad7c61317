//! Seeded chain sampling from slot-typed templates.
//!
//! The generator is PCG-64 (XSL-RR 128/64) seeded with `seed_from_u64`.
//! Each chain draws `next_u64() % templates.len()` for the template, then
//! `next_u64() % candidates.len()` for every slot from left to right, with
//! candidates ordered by module id and version.

use ecm_core::{EcmContract, SemVer};
use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::Serialize;
use thiserror::Error;

use crate::fixtures::{Library, TaskTemplate};

/// Seed whose 500-chain population is the golden benchmark population.
pub const SEED_PRIMARY: u64 = 24068;
pub const POPULATION: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("template {template} slot {slot} (`{tag}`) has no candidate modules")]
    EmptyFamily { template: String, slot: usize, tag: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainSpec {
    pub template_id: String,
    pub modules: Vec<(String, SemVer)>,
    pub seed_tag: String,
}

impl ChainSpec {
    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn keys(&self) -> Vec<String> {
        self.modules.iter().map(|(id, v)| format!("{id}@{v}")).collect()
    }

    /// The chain's contracts; `None` if a module is missing from `library`.
    pub fn resolve(&self, library: &Library) -> Option<Vec<EcmContract>> {
        self.modules.iter().map(|(id, v)| library.get(id, v).cloned()).collect()
    }
}

pub fn generate_chains(
    templates: &[TaskTemplate],
    library: &Library,
    n: usize,
    seed: u64,
) -> Result<Vec<ChainSpec>, GenerateError> {
    let mut pools = Vec::with_capacity(templates.len());
    for t in templates {
        let mut slots = Vec::with_capacity(t.slots.len());
        for (i, tag) in t.slots.iter().enumerate() {
            let c = library.candidates(tag);
            if c.is_empty() {
                return Err(GenerateError::EmptyFamily { template: t.template_id.clone(), slot: i, tag: tag.clone() });
            }
            slots.push(c);
        }
        pools.push(slots);
    }
    if templates.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut draw = |len: usize| (rng.next_u64() % len as u64) as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = draw(templates.len());
        let modules = pools[t]
            .iter()
            .map(|cands| {
                let c = cands[draw(cands.len())];
                (c.module_id.to_string(), c.version())
            })
            .collect();
        out.push(ChainSpec { template_id: templates[t].template_id.clone(), modules, seed_tag: format!("{seed}/{i}") });
    }
    Ok(out)
}
