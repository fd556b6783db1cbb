pub mod baselines;
pub mod channel;
pub mod evaluation;
pub mod numerics;
pub mod oracle;
pub mod rsbf;
pub mod sdp;
