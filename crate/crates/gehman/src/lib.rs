//! Cantor systems presented by towers of graph covers, realized as exact
//! piecewise-linear dynamics on a universal dendrite.
//!
//! A build starts from a subshift (or an explicit cover tower), validates
//! the tower, assigns binary codes to its cells, and embeds everything in
//! the dendrite whose branch points sit at the binary-tree nodes and whose
//! arcs shrink fourfold per level. On top of that live two maps: a
//! piecewise-linear map driven per arc by the cover data, and a stage-limit
//! map on the root arcs whose restriction to the embedded Cantor set is the
//! induced shift. All arithmetic is exact rational; every check either
//! passes or names a witness.

pub mod code;
pub mod cover;
pub mod dendrite;
pub mod dynamics;
pub mod exact;
pub mod export;
pub mod ratio;
pub mod subshift;
pub mod system;
pub mod verify;
