pub mod quad;
pub mod roots;
