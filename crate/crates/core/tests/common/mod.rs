#![allow(dead_code)]

pub mod graphs;
pub mod planar_oracle;
