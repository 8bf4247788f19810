#include "tofbench/scripting.hpp"

#include "tofbench/operators.hpp"

#include "fmt_path.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <glob.h>
#include <numbers>

namespace tofbench::script {

SyntaxError::SyntaxError(std::size_t line, std::size_t column,
                         const std::string &what)
    : DataError(fmt::format("line {}, column {}: {}", line, column, what)),
      line_(line), column_(column) {}

RuntimeError::RuntimeError(ErrorKind kind, std::size_t line,
                           const std::string &what)
    : Error(kind, what), line_(line) {}

const std::vector<std::string> &command_names() {
  static const std::vector<std::string> names{
      "ConvertUnits", "Count", "Echo",  "EmptyDataSet", "ExtractBank",
      "files",        "Focus", "Group", "Load",         "Merge",
      "Normalize",    "Rebin", "Save",  "Select",       "SetLabel",
      "Sort"};
  return names;
}

// ---------------------------------------------------------------- equality

bool operator==(const Expr &a, const Expr &b) {
  if (a.node.index() != b.node.index())
    return false;
  return std::visit(
      [&](const auto &x) {
        using T = std::decay_t<decltype(x)>;
        const auto &y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, NumberLit>)
          return x.value == y.value;
        else if constexpr (std::is_same_v<T, StringLit>)
          return x.value == y.value;
        else if constexpr (std::is_same_v<T, Ident>)
          return x.name == y.name;
        else if constexpr (std::is_same_v<T, Call>)
          return x.name == y.name &&
                 std::equal(x.args.begin(), x.args.end(), y.args.begin(),
                            y.args.end(),
                            [](const ExprPtr &p, const ExprPtr &q) { return *p == *q; });
        else
          return *x.lhs == *y.lhs && *x.rhs == *y.rhs;
      },
      a.node);
}

namespace {
bool same_call(const Call &x, const Call &y) {
  Expr a{x}, b{y};
  return a == b;
}
} // namespace

bool operator==(const Statement &a, const Statement &b) {
  if (a.node.index() != b.node.index())
    return false;
  if (auto x = std::get_if<Assign>(&a.node)) {
    const auto &y = std::get<Assign>(b.node);
    return x->name == y.name && *x->value == *y.value;
  }
  if (auto x = std::get_if<CallStmt>(&a.node))
    return same_call(x->call, std::get<CallStmt>(b.node).call);
  const auto &x = std::get<ForLoop>(a.node);
  const auto &y = std::get<ForLoop>(b.node);
  return x.var == y.var && *x.iterable == *y.iterable && x.body == y.body;
}

bool operator==(const Script &a, const Script &b) {
  return a.statements == b.statements;
}

// ------------------------------------------------------------------- lexer

namespace {

enum class Tok { ident, number, string, eq, lparen, rparen, comma, amp, newline, end };

struct Token {
  Tok kind;
  std::string text;
  double number = 0;
  std::size_t line, column;
};

std::string_view tok_name(Tok t) {
  switch (t) {
  case Tok::ident:
    return "identifier";
  case Tok::number:
    return "number";
  case Tok::string:
    return "string";
  case Tok::eq:
    return "'='";
  case Tok::lparen:
    return "'('";
  case Tok::rparen:
    return "')'";
  case Tok::comma:
    return "','";
  case Tok::amp:
    return "'&'";
  case Tok::newline:
    return "end of line";
  case Tok::end:
    return "end of input";
  }
  return "?";
}

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n = 1) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    const std::size_t l = line, cl = col;
    if (c == ' ' || c == '\t' || c == '\r') {
      advance();
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n')
        advance();
    } else if (c == '\n') {
      out.push_back({Tok::newline, "\n", 0, l, cl});
      advance();
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j]))
        ++j;
      out.push_back({Tok::ident, std::string(src.substr(i, j - i)), 0, l, cl});
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
               (c == '-' && i + 1 < src.size() &&
                (std::isdigit(static_cast<unsigned char>(src[i + 1])) ||
                 src[i + 1] == '.'))) {
      std::size_t j = i + 1;
      while (j < src.size() &&
             (ident_char(src[j]) || src[j] == '.' ||
              ((src[j] == '+' || src[j] == '-') &&
               (src[j - 1] == 'e' || src[j - 1] == 'E'))))
        ++j;
      const auto text = src.substr(i, j - i);
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(v))
        throw SyntaxError(l, cl, fmt::format("bad number literal '{}'", text));
      out.push_back({Tok::number, std::string(text), v, l, cl});
      advance(j - i);
    } else if (c == '"') {
      std::string s;
      advance();
      for (;;) {
        if (i >= src.size() || src[i] == '\n')
          throw SyntaxError(l, cl, "unterminated string literal");
        if (src[i] == '"') {
          advance();
          break;
        }
        if (src[i] == '\\') {
          if (i + 1 >= src.size())
            throw SyntaxError(l, cl, "unterminated string literal");
          const char e = src[i + 1];
          if (e == 'n')
            s += '\n';
          else if (e == '"' || e == '\\')
            s += e;
          else
            throw SyntaxError(line, col, fmt::format("unknown escape '\\{}'", e));
          advance(2);
          continue;
        }
        s += src[i];
        advance();
      }
      out.push_back({Tok::string, std::move(s), 0, l, cl});
    } else {
      Tok t;
      switch (c) {
      case '=':
        t = Tok::eq;
        break;
      case '(':
        t = Tok::lparen;
        break;
      case ')':
        t = Tok::rparen;
        break;
      case ',':
        t = Tok::comma;
        break;
      case '&':
        t = Tok::amp;
        break;
      default:
        throw SyntaxError(l, cl, fmt::format("unexpected character '{}'", c));
      }
      out.push_back({t, std::string(1, c), 0, l, cl});
      advance();
    }
  }
  out.push_back({Tok::end, "", 0, line, col});
  return out;
}

// ------------------------------------------------------------------ parser

bool is_keyword(std::string_view s) {
  return s == "for" || s == "in" || s == "endfor";
}

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Script script() {
    Script s;
    s.statements = block(false);
    return s;
  }

private:
  const Token &peek() const { return toks_[pos_]; }
  const Token &next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail(const Token &t, const std::string &what) const {
    throw SyntaxError(t.line, t.column, what);
  }

  const Token &expect(Tok kind, std::string_view context) {
    const Token &t = peek();
    if (t.kind != kind)
      fail(t, fmt::format("expected {} {}, found {}", tok_name(kind), context,
                          describe_token(t)));
    return next();
  }

  static std::string describe_token(const Token &t) {
    if (t.kind == Tok::ident || t.kind == Tok::number)
      return fmt::format("'{}'", t.text);
    if (t.kind == Tok::string)
      return "a string";
    return std::string(tok_name(t.kind));
  }

  void end_of_statement() {
    const Token &t = peek();
    if (t.kind == Tok::newline)
      next();
    else if (t.kind != Tok::end)
      fail(t, fmt::format("expected end of line, found {}", describe_token(t)));
  }

  std::vector<Statement> block(bool in_loop) {
    std::vector<Statement> out;
    for (;;) {
      const Token &t = peek();
      if (t.kind == Tok::newline) {
        next();
        continue;
      }
      if (t.kind == Tok::end) {
        if (in_loop)
          fail(t, "missing endfor before end of input");
        return out;
      }
      if (t.kind == Tok::ident && t.text == "endfor") {
        if (!in_loop)
          fail(t, "endfor without a matching for");
        return out;
      }
      out.push_back(statement());
    }
  }

  Statement statement() {
    const Token &t = peek();
    if (t.kind != Tok::ident)
      fail(t, fmt::format("expected a statement, found {}", describe_token(t)));
    Statement st;
    st.line = t.line;
    if (t.text == "for") {
      next();
      ForLoop loop;
      const Token &var = expect(Tok::ident, "after 'for'");
      if (is_keyword(var.text))
        fail(var, fmt::format("'{}' cannot be a loop variable", var.text));
      loop.var = var.text;
      const Token &in = peek();
      if (in.kind != Tok::ident || in.text != "in")
        fail(in, fmt::format("expected 'in', found {}", describe_token(in)));
      next();
      loop.iterable = expression();
      if (peek().kind != Tok::newline)
        fail(peek(), fmt::format("expected end of line after the loop header, "
                                 "found {}",
                                 describe_token(peek())));
      loop.body = block(true);
      next(); // endfor
      end_of_statement();
      st.node = std::move(loop);
      return st;
    }
    if (is_keyword(t.text))
      fail(t, fmt::format("unexpected '{}'", t.text));
    if (toks_[pos_ + 1].kind == Tok::eq) {
      const std::string name = next().text;
      next();
      st.node = Assign{name, expression()};
    } else {
      auto e = primary();
      auto *call = std::get_if<Call>(&e->node);
      if (!call)
        fail(t, fmt::format("expected an assignment or a command call, found "
                            "'{}'",
                            t.text));
      st.node = CallStmt{*call};
    }
    end_of_statement();
    return st;
  }

  ExprPtr expression() {
    auto lhs = primary();
    while (peek().kind == Tok::amp) {
      const Token &amp = next();
      auto rhs = primary();
      lhs = std::make_shared<Expr>(Expr{Concat{lhs, rhs}, amp.line, amp.column});
    }
    return lhs;
  }

  ExprPtr primary() {
    const Token &t = next();
    switch (t.kind) {
    case Tok::number:
      return std::make_shared<Expr>(Expr{NumberLit{t.number}, t.line, t.column});
    case Tok::string:
      return std::make_shared<Expr>(Expr{StringLit{t.text}, t.line, t.column});
    case Tok::lparen: {
      auto e = expression();
      expect(Tok::rparen, "to close '('");
      return e;
    }
    case Tok::ident: {
      if (is_keyword(t.text))
        fail(t, fmt::format("unexpected '{}'", t.text));
      if (peek().kind != Tok::lparen)
        return std::make_shared<Expr>(Expr{Ident{t.text}, t.line, t.column});
      const auto &names = command_names();
      if (std::find(names.begin(), names.end(), t.text) == names.end())
        fail(t, fmt::format("unknown command '{}'", t.text));
      next();
      Call call{t.text, {}};
      if (peek().kind != Tok::rparen) {
        call.args.push_back(expression());
        while (peek().kind == Tok::comma) {
          next();
          call.args.push_back(expression());
        }
      }
      expect(Tok::rparen, fmt::format("to close the call to {}", t.text));
      return std::make_shared<Expr>(Expr{std::move(call), t.line, t.column});
    }
    default:
      fail(t, fmt::format("expected an expression, found {}", describe_token(t)));
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------- pretty printer

std::string quote(const std::string &s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\')
      out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + '"';
}

void print_expr(std::string &out, const Expr &e) {
  std::visit(
      [&](const auto &x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NumberLit>) {
          out += fmt::format("{}", x.value);
        } else if constexpr (std::is_same_v<T, StringLit>) {
          out += quote(x.value);
        } else if constexpr (std::is_same_v<T, Ident>) {
          out += x.name;
        } else if constexpr (std::is_same_v<T, Call>) {
          out += x.name + "(";
          for (std::size_t i = 0; i < x.args.size(); ++i) {
            if (i)
              out += ", ";
            print_expr(out, *x.args[i]);
          }
          out += ")";
        } else {
          print_expr(out, *x.lhs);
          out += " & ";
          const bool nested = std::holds_alternative<Concat>(x.rhs->node);
          if (nested)
            out += "(";
          print_expr(out, *x.rhs);
          if (nested)
            out += ")";
        }
      },
      e.node);
}

void print_block(std::string &out, const std::vector<Statement> &block, int depth) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  for (const auto &st : block) {
    out += indent;
    if (auto a = std::get_if<Assign>(&st.node)) {
      out += a->name + " = ";
      print_expr(out, *a->value);
      out += "\n";
    } else if (auto c = std::get_if<CallStmt>(&st.node)) {
      print_expr(out, Expr{c->call});
      out += "\n";
    } else {
      const auto &f = std::get<ForLoop>(st.node);
      out += "for " + f.var + " in ";
      print_expr(out, *f.iterable);
      out += "\n";
      print_block(out, f.body, depth + 1);
      out += indent + "endfor\n";
    }
  }
}

} // namespace

Script parse(std::string_view text) { return Parser(lex(text)).script(); }

std::string pretty_print(const Script &s) {
  std::string out;
  print_block(out, s.statements, 0);
  return out;
}

// ------------------------------------------------------------- interpreter

std::string describe(const Value &v) {
  return std::visit(
      [](const auto &x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) {
          return fmt::format("{}", x);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, DatasetValue>) {
          return fmt::format("<dataset '{}': {} spectra, {}>", x.data->title(),
                             x.data->size(), to_string(x.data->x_units()));
        } else if constexpr (std::is_same_v<T, RunValue>) {
          return fmt::format("<run {} from {}>", x.run->run_number, x.path);
        } else {
          std::string out = "[";
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i)
              out += ", ";
            out += describe(x[i]);
          }
          return out + "]";
        }
      },
      v.v);
}

namespace {

std::string_view type_name(const Value &v) {
  switch (v.v.index()) {
  case 0:
    return "number";
  case 1:
    return "string";
  case 2:
    return "dataset";
  case 3:
    return "run";
  default:
    return "list";
  }
}

int glob_error(const char *, int) { return 1; }

void check_pattern(const std::string &pattern) {
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '\\') {
      ++i;
      continue;
    }
    if (pattern[i] != '[')
      continue;
    std::size_t j = i + 1;
    if (j < pattern.size() && (pattern[j] == '!' || pattern[j] == '^'))
      ++j;
    if (j < pattern.size() && pattern[j] == ']')
      ++j;
    while (j < pattern.size() && pattern[j] != ']' && pattern[j] != '/')
      ++j;
    if (j >= pattern.size() || pattern[j] != ']')
      throw DataError(fmt::format("invalid file pattern '{}': unclosed '[' at "
                                  "position {}",
                                  pattern, i));
    i = j;
  }
}

std::string escape_glob(const std::string &s) {
  std::string out;
  for (char c : s) {
    if (c == '*' || c == '?' || c == '[' || c == ']' || c == '\\')
      out += '\\';
    out += c;
  }
  return out;
}

class Interpreter {
public:
  explicit Interpreter(Environment &env) : env_(env) {}

  void run_block(const std::vector<Statement> &block) {
    for (const auto &st : block)
      run(st);
  }

private:
  void run(const Statement &st) {
    if (auto loop = std::get_if<ForLoop>(&st.node)) {
      Value seq = guarded(st.line, [&] { return eval(*loop->iterable); });
      auto *items = std::get_if<ValueList>(&seq.v);
      if (!items)
        throw RuntimeError(ErrorKind::data, st.line,
                           fmt::format("line {}: for loop needs a list, got a {}",
                                       st.line, type_name(seq)));
      const auto saved = env_.vars.find(loop->var) != env_.vars.end()
                             ? std::optional<Value>(env_.vars[loop->var])
                             : std::nullopt;
      try {
        for (const auto &item : *items) {
          env_.vars[loop->var] = item;
          run_block(loop->body);
        }
      } catch (const RuntimeError &e) {
        throw RuntimeError(e.kind(), e.line(),
                           fmt::format("{} (in for loop at line {})", e.what(),
                                       st.line));
      }
      if (saved)
        env_.vars[loop->var] = *saved;
      else
        env_.vars.erase(loop->var);
      return;
    }
    if (auto a = std::get_if<Assign>(&st.node)) {
      Value v = guarded(st.line, [&] { return eval(*a->value); });
      env_.vars[a->name] = std::move(v);
      return;
    }
    const auto &c = std::get<CallStmt>(st.node);
    guarded(st.line, [&] { return call(c.call); });
  }

  template <class F> Value guarded(std::size_t line, F &&f) {
    try {
      return f();
    } catch (const RuntimeError &) {
      throw;
    } catch (const Error &e) {
      throw RuntimeError(e.kind(), line, fmt::format("line {}: {}", line, e.what()));
    } catch (const std::exception &e) {
      throw RuntimeError(ErrorKind::data, line,
                         fmt::format("line {}: {}", line, e.what()));
    }
  }

  Value eval(const Expr &e) {
    return std::visit(
        [&](const auto &x) -> Value {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, NumberLit>) {
            return {x.value};
          } else if constexpr (std::is_same_v<T, StringLit>) {
            return {x.value};
          } else if constexpr (std::is_same_v<T, Ident>) {
            auto it = env_.vars.find(x.name);
            if (it == env_.vars.end())
              throw DataError(fmt::format("'{}' is not defined", x.name));
            return it->second;
          } else if constexpr (std::is_same_v<T, Call>) {
            return call(x);
          } else {
            return {text(eval(*x.lhs), "'&'") + text(eval(*x.rhs), "'&'")};
          }
        },
        e.node);
  }

  static std::string text(const Value &v, std::string_view what) {
    if (auto s = std::get_if<std::string>(&v.v))
      return *s;
    if (auto d = std::get_if<double>(&v.v))
      return fmt::format("{}", *d);
    throw DataError(fmt::format("{} needs strings or numbers, got a {}", what,
                                type_name(v)));
  }

  std::filesystem::path resolve(const std::string &p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : env_.base_dir / path;
  }

  struct Args {
    const Call &call;
    std::vector<Value> v;

    void count(std::size_t lo, std::size_t hi) const {
      if (v.size() < lo || v.size() > hi)
        throw DataError(fmt::format(
            "{} takes {} argument{}, got {}", call.name,
            lo == hi ? fmt::format("{}", lo) : fmt::format("{} to {}", lo, hi),
            hi == 1 ? "" : "s", v.size()));
    }
    template <class T> const T &get(std::size_t i, std::string_view what) const {
      if (auto p = std::get_if<T>(&v[i].v))
        return *p;
      throw DataError(fmt::format("{}: argument {} must be {}, got a {}",
                                  call.name, i + 1, what, type_name(v[i])));
    }
    double number(std::size_t i) const { return get<double>(i, "a number"); }
    const std::string &string(std::size_t i) const {
      return get<std::string>(i, "a string");
    }
    const DatasetValue &dataset(std::size_t i) const {
      return get<DatasetValue>(i, "a dataset");
    }
  };

  static Value wrap(DataSet ds, std::shared_ptr<const Spectrum> monitor = nullptr) {
    return {DatasetValue{std::make_shared<const DataSet>(std::move(ds)),
                         std::move(monitor)}};
  }

  Value call(const Call &c) {
    Args a{c, {}};
    for (const auto &arg : c.args)
      a.v.push_back(eval(*arg));
    const std::string &n = c.name;

    if (n == "EmptyDataSet") {
      a.count(0, 1);
      const auto units = a.v.empty() ? XUnits::tof_us : parse_units(a.string(0));
      return wrap(DataSet("", units, "counts", {}));
    }
    if (n == "files") {
      a.count(1, 1);
      ValueList out;
      for (auto &f : builtin_files(a.string(0), env_.base_dir))
        out.push_back({std::move(f)});
      return {std::move(out)};
    }
    if (n == "Load") {
      a.count(1, 1);
      return {RunValue{std::make_shared<const io::Run>(io::read_run(resolve(a.string(0)))),
                       a.string(0)}};
    }
    if (n == "ExtractBank") {
      a.count(3, 3);
      const AttrValue want = std::holds_alternative<double>(a.v[2].v)
                                 ? AttrValue(a.number(2))
                                 : AttrValue(a.string(2));
      if (auto r = std::get_if<RunValue>(&a.v[0].v)) {
        const DataSet *detector = nullptr;
        std::shared_ptr<const Spectrum> monitor;
        for (const auto &d : r->run->datasets) {
          if (d.kind == io::DatasetKind::monitor && !monitor && !d.data.is_empty())
            monitor = std::make_shared<const Spectrum>(d.data.spectra().front());
          if (d.kind == io::DatasetKind::histogram && !detector)
            detector = &d.data;
        }
        if (!detector)
          throw DataError(fmt::format("run {} has no histogram dataset", r->path));
        return wrap(ops::extract_group(*detector, a.string(1), want), monitor);
      }
      const auto &d = a.dataset(0);
      return wrap(ops::extract_group(*d.data, a.string(1), want), d.monitor);
    }
    if (n == "Normalize") {
      a.count(2, 3);
      const auto &d = a.dataset(0);
      if (std::holds_alternative<double>(a.v[1].v)) {
        a.count(2, 2);
        return wrap(ops::normalize(*d.data, ops::NormalizeByScalar{a.number(1)}),
                    d.monitor);
      }
      const std::string &mode = a.string(1);
      if (mode == "monitor") {
        a.count(2, 2);
        if (!d.monitor)
          throw DataError("Normalize: dataset has no monitor spectrum");
        return wrap(ops::normalize(*d.data, ops::NormalizeByMonitor{d.monitor.get()}),
                    d.monitor);
      }
      if (mode == "time") {
        double seconds;
        if (a.v.size() == 3) {
          seconds = a.number(2);
        } else {
          const AttrValue *v = d.data->attribute("duration_s");
          const auto num = v ? as_number(*v) : std::nullopt;
          if (!num)
            throw DataError("Normalize: no duration given and the dataset has "
                            "no 'duration_s' attribute");
          seconds = *num;
        }
        return wrap(ops::normalize(*d.data, ops::NormalizeByTime{seconds}),
                    d.monitor);
      }
      if (mode == "scalar") {
        a.count(3, 3);
        return wrap(ops::normalize(*d.data, ops::NormalizeByScalar{a.number(2)}),
                    d.monitor);
      }
      throw DataError(fmt::format(
          "Normalize: unknown mode '{}' (monitor, time or scalar)", mode));
    }
    if (n == "SetLabel") {
      a.count(2, 2);
      const auto &d = a.dataset(0);
      return wrap(ops::relabel(*d.data, a.string(1)), d.monitor);
    }
    if (n == "Merge") {
      a.count(2, 2);
      return wrap(ops::merge(*a.dataset(0).data, *a.dataset(1).data));
    }
    if (n == "Focus") {
      a.count(4, 4);
      const auto &d = a.dataset(0);
      const ops::FocusParams fp(a.number(1) * std::numbers::pi / 180.0,
                                a.number(2), a.number(3));
      return wrap(ops::time_focus(*d.data, fp), d.monitor);
    }
    if (n == "ConvertUnits") {
      a.count(2, 2);
      const auto &d = a.dataset(0);
      return wrap(ops::convert_units(*d.data, parse_units(a.string(1))), d.monitor);
    }
    if (n == "Group") {
      a.count(1, 2);
      const auto &d = a.dataset(0);
      std::map<std::uint32_t, std::uint32_t> groups;
      for (const auto &s : d.data->spectra()) {
        std::uint32_t gid = s.group_id();
        if (a.v.size() == 2) {
          const AttrValue *v = s.attribute(a.string(1));
          const auto num = v ? as_number(*v) : std::nullopt;
          if (!num || *num < 0 || *num != std::floor(*num))
            throw DataError(fmt::format(
                "Group: spectrum {} lacks a non-negative integer '{}' attribute",
                s.id(), a.string(1)));
          gid = static_cast<std::uint32_t>(*num);
        }
        groups[s.id()] = gid;
      }
      return wrap(ops::group_spectra(*d.data, groups), d.monitor);
    }
    if (n == "Rebin") {
      a.count(4, 4);
      const auto &d = a.dataset(0);
      const double bins = a.number(3);
      if (!(bins >= 1) || bins != std::floor(bins) || bins > UINT32_MAX)
        throw DataError(fmt::format("Rebin: bin count must be a positive "
                                    "integer, got {}",
                                    bins));
      return wrap(ops::rebin(*d.data, XScale::uniform(a.number(1), a.number(2),
                                                      static_cast<std::uint32_t>(bins))),
                  d.monitor);
    }
    if (n == "Sort") {
      a.count(2, 3);
      const auto &d = a.dataset(0);
      bool ascending = true;
      if (a.v.size() == 3) {
        const auto &dir = a.string(2);
        if (dir != "asc" && dir != "desc")
          throw DataError(fmt::format("Sort: direction must be \"asc\" or "
                                      "\"desc\", got '{}'",
                                      dir));
        ascending = dir == "asc";
      }
      return wrap(ops::sort_spectra(*d.data, a.string(1), ascending), d.monitor);
    }
    if (n == "Select") {
      if (a.v.size() < 2)
        a.count(2, 2);
      const auto &d = a.dataset(0);
      std::vector<std::uint32_t> ids;
      auto add = [&](const Value &v) {
        const auto *x = std::get_if<double>(&v.v);
        if (!x || *x < 0 || *x != std::floor(*x) || *x > UINT32_MAX)
          throw DataError(fmt::format("Select: spectrum ids must be "
                                      "non-negative integers, got {}",
                                      describe(v)));
        ids.push_back(static_cast<std::uint32_t>(*x));
      };
      for (std::size_t i = 1; i < a.v.size(); ++i) {
        if (auto list = std::get_if<ValueList>(&a.v[i].v))
          for (const auto &v : *list)
            add(v);
        else
          add(a.v[i]);
      }
      return wrap(dataset_select(*d.data, ids), d.monitor);
    }
    if (n == "Save") {
      a.count(2, 3);
      const auto &d = a.dataset(0);
      const auto path = resolve(a.string(1));
      std::string format = a.v.size() == 3 ? a.string(2) : "";
      if (format.empty()) {
        const auto ext = path.extension().string();
        format = ext == ".trf" ? "trf" : ext == ".json" ? "json" : "ascii";
      }
      save(*d.data, path, format);
      return a.v[0];
    }
    if (n == "Echo") {
      std::string line;
      for (std::size_t i = 0; i < a.v.size(); ++i) {
        if (i)
          line += ' ';
        line += describe(a.v[i]);
      }
      if (env_.out)
        *env_.out << line << '\n';
      return {line};
    }
    if (n == "Count") {
      a.count(1, 1);
      if (auto l = std::get_if<ValueList>(&a.v[0].v))
        return {static_cast<double>(l->size())};
      return {static_cast<double>(a.dataset(0).data->size())};
    }
    throw DataError(fmt::format("unknown command '{}'", n));
  }

  static XUnits parse_units(const std::string &s) {
    if (s == "tof" || s == "tof_us")
      return XUnits::tof_us;
    if (s == "wavelength" || s == "wavelength_A")
      return XUnits::wavelength_A;
    if (s == "d" || s == "dspacing" || s == "dspacing_A")
      return XUnits::dspacing_A;
    if (s == "q" || s == "Q" || s == "Q_invA")
      return XUnits::Q_invA;
    return parse_xunits(s);
  }

  static void save(const DataSet &ds, const std::filesystem::path &path,
                   const std::string &format) {
    auto attr_int = [&](std::string_view name) -> std::int64_t {
      const AttrValue *v = ds.attribute(name);
      const auto num = v ? as_number(*v) : std::nullopt;
      return num ? static_cast<std::int64_t>(*num) : 0;
    };
    std::string instrument;
    if (const AttrValue *v = ds.attribute("instrument"))
      if (auto s = std::get_if<std::string>(v))
        instrument = *s;
    io::Run run{instrument, static_cast<std::uint32_t>(attr_int("run_number")),
                attr_int("start_time"), {{io::DatasetKind::histogram, ds}}};
    if (format == "trf")
      io::write_runfile(path, run);
    else if (format == "ascii")
      io::write_ascii_columns(ds, path);
    else if (format == "json" || format == "hierarchical")
      io::write_hierarchical(run, path);
    else
      throw DataError(fmt::format("Save: unknown format '{}' (trf, ascii or json)",
                                  format));
  }

  Environment &env_;
};

} // namespace

std::vector<std::string> builtin_files(const std::string &pattern,
                                       const std::filesystem::path &base_dir) {
  check_pattern(pattern);
  const bool relative = !std::filesystem::path(pattern).is_absolute();
  std::string prefix;
  if (relative && !base_dir.empty() && base_dir != ".") {
    prefix = base_dir.string();
    if (prefix.back() != '/')
      prefix += '/';
  }
  const std::string full = escape_glob(prefix) + pattern;
  glob_t g{};
  const int rc = ::glob(full.c_str(), 0, glob_error, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) {
      std::string p = g.gl_pathv[i];
      if (!prefix.empty() && p.starts_with(prefix))
        p.erase(0, prefix.size());
      out.push_back(std::move(p));
    }
  }
  globfree(&g);
  if (rc == GLOB_ABORTED)
    throw IoError(fmt::format("cannot read directories for pattern '{}'", pattern));
  if (rc != 0 && rc != GLOB_NOMATCH)
    throw DataError(fmt::format("invalid file pattern '{}'", pattern));
  std::sort(out.begin(), out.end());
  return out;
}

void execute(const Script &script, Environment &env) {
  Interpreter(env).run_block(script.statements);
}

} // namespace tofbench::script
