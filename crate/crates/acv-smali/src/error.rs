use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unsupported opcode: {mnemonic}")]
pub struct UnsupportedOpcode {
    pub mnemonic: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("frame size {size} exceeds the 256-register limit in {class}->{method}")]
pub struct FrameSizeError {
    pub class: String,
    pub method: String,
    pub size: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed type descriptor: {0}")]
pub struct DescriptorError(pub String);
