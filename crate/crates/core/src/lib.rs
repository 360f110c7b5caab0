pub mod dataset;
pub mod encoding;
pub mod local;
pub mod oracle;
pub mod paillier;
pub mod ppknn;
pub mod protocols;
pub mod runtime;
