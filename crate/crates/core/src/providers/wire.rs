use serde::{Deserialize, Serialize};

pub const CAPTION_PATH: &str = "/caption";
pub const ASSERT_PATH: &str = "/assert";
pub const VQA_PATH: &str = "/vqa";

/// JSON body POSTed to every provider path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub id: String,
    pub image_ref: String,
    pub prompt: String,
    /// Caption format key, on `/caption` requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// The raw text the prompt was rendered from: the caption on `/assert`,
    /// the assertion on `/vqa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

impl ProviderRequest {
    pub fn new(
        id: impl Into<String>,
        image_ref: impl Into<String>,
        prompt: impl Into<String>,
    ) -> Self {
        ProviderRequest {
            id: id.into(),
            image_ref: image_ref.into(),
            prompt: prompt.into(),
            format: None,
            input: None,
            image_b64: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub id: String,
    pub text: String,
}
