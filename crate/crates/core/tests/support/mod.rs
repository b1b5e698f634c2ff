pub mod oracle;
pub mod parity;
