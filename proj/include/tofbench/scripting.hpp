#pragma once

// Batch DSL for repetitive reductions.
//
//   name = expr
//   for id in expr
//     ...
//   endfor
//   Command(arg, ...)
//
// Statements end at a newline, '#' starts a comment, strings are
// double-quoted with \" \\ \n escapes, numbers are f64 and '&' concatenates
// strings. Command names are fixed; see command_names().

#include "tofbench/dataset.hpp"
#include "tofbench/error.hpp"
#include "tofbench/retrievers.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace tofbench::script {

/// Syntax errors carry the 1-based line and column.
class SyntaxError : public DataError {
public:
  SyntaxError(std::size_t line, std::size_t column, const std::string &what);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_, column_;
};

/// Runtime failure; keeps the kind of the underlying error so I/O problems
/// stay I/O problems.
class RuntimeError : public Error {
public:
  RuntimeError(ErrorKind kind, std::size_t line, const std::string &what);
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct NumberLit {
  double value;
};
struct StringLit {
  std::string value;
};
struct Ident {
  std::string name;
};
struct Call {
  std::string name;
  std::vector<ExprPtr> args;
};
struct Concat {
  ExprPtr lhs, rhs;
};

struct Expr {
  std::variant<NumberLit, StringLit, Ident, Call, Concat> node;
  std::size_t line = 0, column = 0;
};

struct Statement;
struct Assign {
  std::string name;
  ExprPtr value;
};
struct CallStmt {
  Call call;
};
struct ForLoop {
  std::string var;
  ExprPtr iterable;
  std::vector<Statement> body;
};
struct Statement {
  std::variant<Assign, CallStmt, ForLoop> node;
  std::size_t line = 0;
};

struct Script {
  std::vector<Statement> statements;
};

/// Structural equality; source positions are ignored.
bool operator==(const Expr &a, const Expr &b);
bool operator==(const Statement &a, const Statement &b);
bool operator==(const Script &a, const Script &b);

const std::vector<std::string> &command_names();

Script parse(std::string_view text);
std::string pretty_print(const Script &s);

struct DatasetValue {
  std::shared_ptr<const DataSet> data;
  /// Monitor spectrum of the run the data came from, used by
  /// Normalize(ds, "monitor").
  std::shared_ptr<const Spectrum> monitor;
};
struct RunValue {
  std::shared_ptr<const io::Run> run;
  std::string path;
};
struct Value;
using ValueList = std::vector<Value>;
struct Value {
  std::variant<double, std::string, DatasetValue, RunValue, ValueList> v;
};

std::string describe(const Value &v);

struct Environment {
  std::map<std::string, Value, std::less<>> vars;
  /// Relative paths in Load/Save/files resolve against this directory.
  std::filesystem::path base_dir = ".";
  std::ostream *out = nullptr;
};

void execute(const Script &script, Environment &env);

/// Sorted matches of a glob pattern (*, ?, [...] per path component).
std::vector<std::string> builtin_files(const std::string &pattern,
                                       const std::filesystem::path &base_dir = ".");

} // namespace tofbench::script
