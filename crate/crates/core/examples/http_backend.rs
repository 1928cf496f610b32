//! The HTTP completion client's wire format. With `MICE_LM_ENDPOINT` set,
//! sends one request to that server; otherwise decodes a canned response.
//!
//! ```text
//! MICE_LM_ENDPOINT=http://localhost:8000/v1/completions cargo run --example http_backend
//! ```

use mice::lm::http::{decode_response, encode_request};
use mice::lm::{CompletionRequest, DecodeParams, HttpBackend, HttpBackendConfig, LmBackend};

const CANNED: &str = r#"{"choices":[{"text":" water | DCM","logprobs":{"tokens":[" water"," ","|"," DCM"],
"top_logprobs":[{" water":-0.105," brine":-2.303},{" ":-0.01},{"|":-0.05},{" DCM":-0.357," THF":-1.204}]}}]}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prompt = "Text: Water was added. The mixture was stirred.\nAnaphor: The mixture\nAntecedents:";
    let params = DecodeParams::greedy();
    println!("request body:\n{}\n", encode_request(prompt, &params));

    let generation = match std::env::var("MICE_LM_ENDPOINT") {
        Ok(endpoint) => {
            let backend = HttpBackend::new(HttpBackendConfig::new(endpoint));
            backend.complete(&CompletionRequest {
                prompt_id: 0,
                prompt: prompt.to_string(),
                params,
                meta: None,
            })?
        }
        Err(_) => decode_response(CANNED)?,
    };
    println!("text: {:?}", generation.text);
    for (tok, top) in generation.tokens.iter().zip(&generation.top_probs) {
        println!("  {tok:?} {top:?}");
    }
    Ok(())
}
