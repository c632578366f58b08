#include "evalkit/backends.hpp"

#include "httplib.h"

namespace evalkit {

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "stop";
}

std::string prompt_text(std::span<const Message> messages) {
  std::string out;
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ':';
    out += m.content;
    out += '\n';
  }
  return out;
}

std::uint64_t mock_logprob_hash(std::uint64_t seed, std::string_view prompt, std::string_view token,
                                std::size_t position) {
  constexpr std::string_view sep = "\x1f";
  return Fnv1a64{}
      .update(std::to_string(seed))
      .update(sep)
      .update(prompt)
      .update(sep)
      .update(token)
      .update(sep)
      .update(std::to_string(position))
      .digest();
}

double mock_logprob(std::uint64_t hash) {
  return -(1.0 + static_cast<double>(hash % 1000) / 1000.0);
}

namespace {

// Applies stop strings and the output-length cap (whitespace tokens).
ModelOutput finish_text(std::string text, const GenerationParams& params) {
  ModelOutput out;
  if (params.stop) {
    std::size_t cut = std::string::npos;
    for (const auto& s : *params.stop) {
      if (s.empty()) continue;
      cut = std::min(cut, text.find(s));
    }
    if (cut != std::string::npos) text.resize(cut);
  }
  std::size_t tokens = 0, i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    if (++tokens > static_cast<std::size_t>(params.max_out_len)) {
      text.resize(i);
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
      out.finish_reason = FinishReason::Length;
      break;
    }
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  }
  out.text = std::move(text);
  return out;
}

}  // namespace

ModelOutput MockBackend::generate(std::span<const Message> messages, const GenerationParams& params,
                                  std::optional<std::string_view> sample_id) const {
  const auto& script = spec().mock;
  if (!spec().capabilities.generate)
    throw TaskError("model '" + spec().abbr + "' lacks the generate capability", false);
  if (sample_id) {
    auto it = script.answers.find(std::string(*sample_id));
    if (it != script.answers.end()) return finish_text(it->second, params);
  }
  if (script.default_rule == MockDefaultRule::FixedText) return finish_text(script.fixed_text, params);
  std::string last_user;
  for (const auto& m : messages)
    if (m.role == Role::User) last_user = m.content;
  return finish_text(last_user, params);
}

std::vector<TokenLogprob> MockBackend::score_logprob(std::span<const Message> messages,
                                                     std::string_view continuation) const {
  if (!spec().capabilities.logprob)
    throw TaskError("model '" + spec().abbr + "' lacks the logprob capability", false);
  std::string prompt = prompt_text(messages);
  std::vector<TokenLogprob> out;
  auto tokens = split_whitespace(continuation);
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    auto h = mock_logprob_hash(spec().mock.logprob_seed, prompt, tokens[pos], pos);
    out.push_back({tokens[pos], mock_logprob(h)});
  }
  return out;
}

ChatCompletionsBackend::ChatCompletionsBackend(ModelSpec spec, std::string api_key)
    : ModelBackend(std::move(spec)), api_key_(std::move(api_key)) {
  const std::string& ep = this->spec().endpoint;
  auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError(ConfigError::Kind::Invalid,
                      "model '" + this->spec().abbr + "': endpoint '" + ep + "' has no scheme");
  auto path_start = ep.find('/', scheme_end + 3);
  origin_ = ep.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : ep.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

Json chat_request_body(const ModelSpec& spec, std::span<const Message> messages,
                       const GenerationParams& params) {
  Json body;
  body["model"] = spec.model_name;
  Json msgs = Json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  body["temperature"] = params.temperature;
  body["top_p"] = params.top_p;
  body["max_tokens"] = params.max_out_len;
  if (params.stop) body["stop"] = *params.stop;
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

ModelOutput parse_chat_response(std::string_view body) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw TaskError("malformed chat-completions response body", true);
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw TaskError("chat-completions response has no choices", false);
  const Json& first = j["choices"][0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object() ||
      !first["message"].contains("content") || !first["message"]["content"].is_string())
    throw TaskError("chat-completions response has no choices[0].message.content", false);
  ModelOutput out;
  out.text = first["message"]["content"].get<std::string>();
  if (first.contains("finish_reason") && first["finish_reason"] == "length")
    out.finish_reason = FinishReason::Length;
  return out;
}

ModelOutput ChatCompletionsBackend::generate(std::span<const Message> messages,
                                             const GenerationParams& params,
                                             std::optional<std::string_view>) const {
  httplib::Client client(origin_);
  auto timeout = std::chrono::milliseconds(spec().timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string path = base_path_ + "/chat/completions";
  auto res = client.Post(path, headers, chat_request_body(spec(), messages, params).dump(),
                         "application/json");
  if (!res)
    throw TaskError("request to " + origin_ + path + " failed: " + httplib::to_string(res.error()),
                    true);
  if (res->status < 200 || res->status >= 300)
    throw TaskError("request to " + origin_ + path + " returned HTTP " +
                        std::to_string(res->status),
                    true);
  return parse_chat_response(res->body);
}

std::vector<TokenLogprob> ChatCompletionsBackend::score_logprob(std::span<const Message>,
                                                                std::string_view) const {
  throw TaskError("model '" + spec().abbr +
                      "': continuation logprobs are not available over chat-completions",
                  false);
}

std::unique_ptr<ModelBackend> make_backend(const ModelSpec& spec, std::string api_key) {
  if (spec.backend == BackendKind::Mock) return std::make_unique<MockBackend>(spec);
  return std::make_unique<ChatCompletionsBackend>(spec, std::move(api_key));
}

}  // namespace evalkit
