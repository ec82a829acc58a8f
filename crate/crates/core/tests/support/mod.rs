#![allow(dead_code, clippy::needless_range_loop)]

pub mod attention;
pub mod bank;
pub mod files;
pub mod frechet;
