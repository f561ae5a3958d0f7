//! One chat completion against an OpenAI-compatible server.
//!
//! TUTORBENCH_BASE_URL=http://localhost:8000/v1 TUTORBENCH_MODEL=my-model \
//!     cargo run --example openai_backend
//!
//! Without `TUTORBENCH_BASE_URL` it only prints the request body it would send.

use tutorbench::backend::{
    BackendHandle, CallContext, CallRole, ChatMessage, ChatRequest, OpenAiBackend, OpenAiConfig,
    SamplingParams,
};

fn main() -> tutorbench::Result<()> {
    let model = std::env::var("TUTORBENCH_MODEL").unwrap_or_else(|_| "gpt-4o".into());
    let messages = [
        ChatMessage::system("You are a college tutor specializing in Python programming."),
        ChatMessage::user("How do I read a JSON file?"),
    ];
    let params = SamplingParams::default();

    let Ok(base_url) = std::env::var("TUTORBENCH_BASE_URL") else {
        let body = ChatRequest::new(&model, &messages, &params);
        println!(
            "{}",
            serde_json::to_string_pretty(&body).expect("serializable")
        );
        return Ok(());
    };
    let mut config = OpenAiConfig::new(base_url, model);
    config.api_key = std::env::var("OPENAI_API_KEY").ok();
    let backend = BackendHandle::new(OpenAiBackend::new("remote", config)?);
    let reply = backend.complete(
        &CallContext::new(CallRole::Tutor, 1, "demo"),
        &messages,
        &params,
    )?;
    println!("{}", reply.texts[0]);
    println!("tokens: {:?}", reply.usage);
    Ok(())
}
