//! Machine-readable error records.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
    /// Context chain, outermost first.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<String>,
}

impl ErrorRecord {
    pub fn from_anyhow(err: &anyhow::Error) -> Self {
        let core = err.chain().position(|e| e.downcast_ref::<gkm_core::Error>().is_some());
        let mut chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
        let (code, message) = match core {
            Some(i) => {
                let code = err.chain().nth(i).and_then(|e| e.downcast_ref::<gkm_core::Error>());
                let message = chain.remove(i);
                chain.truncate(i);
                (code.map_or("cli", gkm_core::Error::code), message)
            }
            None => ("cli", chain.pop().unwrap_or_default()),
        };
        ErrorRecord {
            code: code.to_string(),
            message,
            context: chain,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}
