#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evalkit/types.hpp"

namespace evalkit {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

enum class FinishReason { Stop, Length, Error };

std::string_view to_string(FinishReason reason);

struct ModelOutput {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  FinishReason finish_reason = FinishReason::Stop;
};

// Inference backend. Implementations must tolerate concurrent calls.
class ModelBackend {
 public:
  explicit ModelBackend(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual ~ModelBackend() = default;

  // sample_id lets scripted backends key their answers; real backends ignore it.
  virtual ModelOutput generate(std::span<const Message> messages, const GenerationParams& params,
                               std::optional<std::string_view> sample_id = std::nullopt) const = 0;

  // One logprob per whitespace token of continuation, conditioned on messages.
  virtual std::vector<TokenLogprob> score_logprob(std::span<const Message> messages,
                                                  std::string_view continuation) const = 0;

  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
};

// Deterministic scripted model.
class MockBackend final : public ModelBackend {
 public:
  using ModelBackend::ModelBackend;

  ModelOutput generate(std::span<const Message> messages, const GenerationParams& params,
                       std::optional<std::string_view> sample_id = std::nullopt) const override;
  std::vector<TokenLogprob> score_logprob(std::span<const Message> messages,
                                          std::string_view continuation) const override;
};

// Client for an OpenAI-compatible chat-completions endpoint.
class ChatCompletionsBackend final : public ModelBackend {
 public:
  ChatCompletionsBackend(ModelSpec spec, std::string api_key);

  ModelOutput generate(std::span<const Message> messages, const GenerationParams& params,
                       std::optional<std::string_view> sample_id = std::nullopt) const override;
  std::vector<TokenLogprob> score_logprob(std::span<const Message> messages,
                                          std::string_view continuation) const override;

 private:
  std::string api_key_;
  std::string origin_;     // scheme://host[:port]
  std::string base_path_;  // path prefix before /chat/completions
};

std::unique_ptr<ModelBackend> make_backend(const ModelSpec& spec, std::string api_key = {});

// Request body sent to {endpoint}/chat/completions.
Json chat_request_body(const ModelSpec& spec, std::span<const Message> messages,
                       const GenerationParams& params);

// Parses a chat-completions response body. Malformed JSON is retryable;
// a body without choices[0].message.content is a permanent error.
ModelOutput parse_chat_response(std::string_view body);

// Text the mock conditions on: "role:content\n" per message.
std::string prompt_text(std::span<const Message> messages);

// FNV-1a over seed, prompt, token and position joined by 0x1F.
std::uint64_t mock_logprob_hash(std::uint64_t seed, std::string_view prompt, std::string_view token,
                                std::size_t position);

// -(1 + (h mod 1000) / 1000), always in [-2, -1).
double mock_logprob(std::uint64_t hash);

}  // namespace evalkit
