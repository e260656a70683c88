//! Plants, controllers, closed-loop assembly and model hierarchies.

mod closed_loop;
mod controller;
mod formulations;
mod hierarchy;
mod plant;

pub use closed_loop::{assemble_closed_loop, ClosedLoop};
pub use controller::{pack_controller, unpack_controller, Controller, DesignVector, Layout};
pub use formulations::{make_general_plant, make_normalized_lqg};
pub use hierarchy::ModelHierarchy;
pub use plant::{DescriptorPlant, Dims};
