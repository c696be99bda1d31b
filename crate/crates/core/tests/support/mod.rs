#![allow(dead_code)]

pub mod generator;
pub mod instances;
