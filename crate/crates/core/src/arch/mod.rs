//! Device and netlist data model, text formats and synthetic designs.

mod device;
mod field;
mod netlist;
mod synth;

pub use device::{Device, Rect, SiteKind, DEFAULT_CR_LIMIT, DEFAULT_HC_LIMIT};
pub use field::{FieldKind, PerField};
pub use netlist::{CarryChain, InstKind, Instance, Net, Netlist, Pin};
pub use synth::{generate_synthetic, SynthSpec};
