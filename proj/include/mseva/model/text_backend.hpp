#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mseva/model/graph.hpp"

namespace mseva::model {

/// Token-level text embeddings (tokens x dim). Implementations must be
/// deterministic and safe for concurrent calls.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// Zero rows for text without tokens. Throws Error{BackendFailure}.
  virtual Mat embed(const std::string& text) const = 0;
};

/// Lower-cased alphanumeric runs (bytes >= 0x80 count as word characters, so
/// CJK text survives as runs).
std::vector<std::string> tokenize(const std::string& text);

/// Each token maps to a fixed pseudo-random vector seeded by its FNV-1a hash.
class HashingTextBackend final : public TextBackend {
 public:
  explicit HashingTextBackend(int dim = 32, int max_tokens = 128) : dim_(dim), max_tokens_(max_tokens) {}
  std::string name() const override { return "hash"; }
  int dim() const override { return dim_; }
  Mat embed(const std::string& text) const override;

 private:
  int dim_;
  int max_tokens_;
};

/// Runs `<command> <dim>` with the text on stdin and reads a JSON array of
/// token vectors from stdout, e.g. a pretrained language-model encoder wrapper.
class CommandTextBackend final : public TextBackend {
 public:
  CommandTextBackend(std::string command, int dim) : command_(std::move(command)), dim_(dim) {}
  std::string name() const override { return "command:" + command_; }
  int dim() const override { return dim_; }
  Mat embed(const std::string& text) const override;

 private:
  std::string command_;
  int dim_;
};

/// "hash" or "command:<path>".
std::unique_ptr<TextBackend> make_text_backend(const std::string& spec, int dim);

}  // namespace mseva::model
