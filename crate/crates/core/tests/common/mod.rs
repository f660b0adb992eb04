#![allow(dead_code)]

pub mod dsep;
pub mod oracle;
