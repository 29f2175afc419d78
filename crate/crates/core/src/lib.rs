pub mod numlin;
pub mod expr;
pub mod models;
pub mod qfi;
pub mod estimation;
