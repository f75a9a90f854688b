//! Abelian symmetry layer: quantum-number links and block-sparse tensors.

pub mod decomp;
pub mod fuse;
pub mod group;
pub mod link;
pub mod tensor;

pub use decomp::{cleanup_link, SymSvd};
pub use fuse::{Collision, FuseNode};
pub use group::{Dir, Factor, Group, Qn};
pub use link::{fused_link, SymLink};
pub use tensor::{possible_matches, BlockLayout, Key, LinkMap, SymTensor};
