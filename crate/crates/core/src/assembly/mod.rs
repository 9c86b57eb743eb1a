//! Sparse operators and the bilinear/linear forms of the weak formulations.

mod forms;
mod sparse;

pub use forms::{
    assemble_buoyancy, assemble_convection, assemble_coriolis, assemble_divergence, assemble_forcing,
    assemble_mass, assemble_scalar_source, assemble_stiffness, inf_sup_constant, ConvectionAssembler,
    ElementPattern,
};
pub use sparse::{BlockAssembler, SparseOperator, Structure};
