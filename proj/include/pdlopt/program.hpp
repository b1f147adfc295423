#pragma once

// AST of the declarative prompt-program DSL. See docs/dsl.md for the YAML
// grammar. All types are values: copyable, comparable, immutable once built.

#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "pdlopt/json.hpp"
#include "pdlopt/type_spec.hpp"

namespace pdlopt {

enum class Role { User, Assistant, System, Tool };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

enum class CodeRuntime {
  Sandbox,  // out-of-process runner
  Calc,     // exact arithmetic evaluator
};

struct Block;

struct TextItem {
  std::variant<std::string, Box<Block>> value;
  friend bool operator==(const TextItem&, const TextItem&) = default;
};

struct TextBlock {
  std::vector<TextItem> items;
  std::optional<std::string> def;
  std::optional<Role> role;  // applies to string items; nested text inherits
  friend bool operator==(const TextBlock&, const TextBlock&) = default;
};

struct ModelBlock {
  std::string model_id;  // may be a template, e.g. "${ model }"
  std::optional<std::string> def;
  bool parse_json = false;
  std::optional<TypeSpec> spec;
  std::optional<Role> role;  // role of the response message; assistant by default
  friend bool operator==(const ModelBlock&, const ModelBlock&) = default;
};

struct CodeBlock {
  CodeRuntime runtime = CodeRuntime::Sandbox;
  std::string source;  // template
  std::optional<std::string> def;
  friend bool operator==(const CodeBlock&, const CodeBlock&) = default;
};

struct IfBlock {
  std::string condition;
  Box<Block> then;
  std::optional<Box<Block>> otherwise;
  friend bool operator==(const IfBlock&, const IfBlock&) = default;
};

struct RepeatBlock {
  Box<Block> body;
  int max_iterations = 1;
  std::string until;
  friend bool operator==(const RepeatBlock&, const RepeatBlock&) = default;
};

struct FunctionDef {
  std::string name;
  std::vector<std::pair<std::string, TypeSpec>> params;
  Box<Block> body;
  // Value handed back to the caller; the body's output text when absent.
  std::optional<std::string> result;
  friend bool operator==(const FunctionDef&, const FunctionDef&) = default;
};

struct CallBlock {
  std::string function;
  Json args = Json::object();  // name -> value-or-template
  std::optional<std::string> def;
  friend bool operator==(const CallBlock&, const CallBlock&) = default;
};

struct DataBlock {
  Json value;  // literal; never interpolated
  std::optional<std::string> def;
  friend bool operator==(const DataBlock&, const DataBlock&) = default;
};

struct Block {
  std::variant<TextBlock, ModelBlock, CodeBlock, IfBlock, RepeatBlock, FunctionDef, CallBlock,
               DataBlock>
      node;

  template <typename T>
    requires(!std::is_same_v<std::decay_t<T>, Block>)
  Block(T n) : node(std::move(n)) {}  // NOLINT(google-explicit-constructor)

  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&node);
  }

  friend bool operator==(const Block&, const Block&) = default;
};

struct Program {
  Block root = TextBlock{};
  friend bool operator==(const Program&, const Program&) = default;
};

// Convenience constructors used by the pattern library and tests.
inline TextItem text_item(std::string s) { return {std::move(s)}; }
inline TextItem text_item(Block b) { return {Box<Block>(std::move(b))}; }

/// Parses strict YAML. Errors: Yaml (malformed / too deep), UnknownBlock
/// (unrecognized block kind or key, with path), DuplicateDef, InvalidProgram
/// (ill-typed field values, bad templates, max_iterations < 1).
Program parse_program(std::string_view yaml_text);

/// Same grammar, starting from an already-parsed document.
Program program_from_json(const Json& document);

/// YAML that re-parses to an equal Program.
std::string serialize_program(const Program& program);

/// The document form of a program (what serialize_program emits).
Json program_to_json(const Program& program);
Json block_to_json(const Block& block);

/// Visits every block in pre-order (including function bodies).
template <typename F>
void for_each_block(const Block& block, F&& f);

}  // namespace pdlopt

#include "pdlopt/detail/program_walk.hpp"
