pub mod autodiff;
pub mod corpus;
pub mod graph;
pub mod model;
pub mod seed;
pub mod train;
