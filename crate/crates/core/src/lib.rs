//! Two-stage retrosynthesis: reaction-center scoring on molecular graphs
//! enriched with their planar dual, followed by synthon-conditioned
//! equivariant diffusion that grows the missing reactant atoms in 3D.

pub mod assemble;
pub mod centernet;
pub mod chem;
pub mod diffusion;
pub mod egnn;
pub mod faces;
pub mod numerics;
pub mod pipeline;
