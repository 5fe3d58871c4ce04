use async_trait::async_trait;

use super::{
    extract_html, reject_unknown, GenerationArtifact, GenerationMethod, MethodContext,
    MethodError, ParamMap,
};
use crate::llm::{CallOptions, ChatMessage, Part};

/// The unified direct-prompting instruction, sent verbatim.
pub const DIRECT_PROMPT: &str = "Here is a prototype image of a webpage. Return a single piece of HTML and Tailwind CSS code to reproduce exactly the website. Use \"placeholder.png\" to replace the images. Pay attention to things like size, text, position, and color of all the elements, as well as the overall layout. Respond with the content of the HTML+Tailwind CSS code.";

/// One call: the prompt plus the screenshot.
pub struct DirectPrompt;

#[async_trait]
impl GenerationMethod for DirectPrompt {
    fn name(&self) -> &str {
        "direct"
    }

    fn description(&self) -> &str {
        "single call with the canonical prompt and the full screenshot"
    }

    fn resolve_params(&self, given: &ParamMap) -> Result<ParamMap, MethodError> {
        reject_unknown(given, &[])?;
        Ok(ParamMap::new())
    }

    async fn generate(
        &self,
        ctx: &MethodContext<'_>,
        _params: &ParamMap,
    ) -> Result<GenerationArtifact, MethodError> {
        let messages = [ChatMessage::user(vec![
            Part::text(DIRECT_PROMPT),
            Part::png(ctx.screenshot.to_vec()),
        ])];
        let opts = CallOptions {
            policy: ctx.retry,
            log: ctx.call_log,
            stage: "direct",
        };
        let reply = ctx
            .gateway
            .complete(ctx.model, &messages, opts)
            .await
            .map_err(|source| MethodError::Llm {
                stage: "direct".into(),
                region: None,
                source,
            })?;
        let generated_code = extract_html(&reply.text).map_err(|e| e.in_stage("direct"))?;
        Ok(GenerationArtifact {
            generated_code,
            region_tree: None,
            regions_capped: false,
            call_log_ref: None,
            usage_total: ctx.call_log.usage_total(),
            candidates_considered: 1,
            candidate_scores: Vec::new(),
            selected_candidate: None,
            fragments: Vec::new(),
        })
    }
}
