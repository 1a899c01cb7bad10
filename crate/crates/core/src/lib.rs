pub mod agent;
pub mod analysis;
pub mod explorer;
pub mod extractor;
pub mod graphs;
pub mod lang;
pub mod patterns;
