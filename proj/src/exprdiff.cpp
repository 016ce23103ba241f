#include "octool/exprdiff.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace octool::expr {

enum class VarGroup { Time, State, Control, Param };

struct Node {
  enum class Kind { Const, Var, Unary, Binary, Call };
  Kind kind;
  double value = 0.0;          // Const
  VarGroup group = VarGroup::Time;
  int index = 0;               // Var, 0-based within its group
  char op = 0;                 // Unary ('-') / Binary ('+','-','*','/','^')
  std::string func;            // Call
  NodePtr a, b;
  std::size_t offset = 0;      // source span for diagnostics
  std::size_t length = 0;
};

namespace {

const char* kFuncs[] = {"sin", "cos", "exp", "log", "tanh", "sqrt", "abs"};

bool is_func(const std::string& s) {
  return std::find(std::begin(kFuncs), std::end(kFuncs), s) != std::end(kFuncs);
}

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest(const std::string& ident, const Dims& dims) {
  std::vector<std::string> candidates{"t"};
  for (int i = 1; i <= dims.state; ++i) candidates.push_back("x" + std::to_string(i));
  for (int i = 1; i <= dims.control; ++i) candidates.push_back("u" + std::to_string(i));
  for (int i = 1; i <= dims.param; ++i) candidates.push_back("p" + std::to_string(i));
  for (const char* f : kFuncs) candidates.emplace_back(f);
  std::string best;
  int best_d = 1 << 20;
  for (const auto& c : candidates) {
    const int d = levenshtein(ident, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

class Parser {
public:
  Parser(const std::string& src, const Dims& dims) : src_(src), dims_(dims) {}

  NodePtr run() {
    NodePtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size())
      throw ParseError("unexpected trailing input", pos_);
    return e;
  }

private:
  const std::string& src_;
  Dims dims_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  NodePtr make_binary(char op, NodePtr a, NodePtr b, std::size_t off) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Binary;
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    n->offset = off;
    n->length = 1;
    return n;
  }

  // expr := term (('+'|'-') term)*
  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      const std::size_t off = pos_;
      ++pos_;
      lhs = make_binary(c, lhs, parse_term(), off);
    }
  }

  // term := factor (('*'|'/') factor)*
  NodePtr parse_term() {
    NodePtr lhs = parse_factor();
    for (;;) {
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      const std::size_t off = pos_;
      ++pos_;
      lhs = make_binary(c, lhs, parse_factor(), off);
    }
  }

  // factor := ('-'|'+') factor | power
  NodePtr parse_factor() {
    const char c = peek();
    if (c == '-' || c == '+') {
      const std::size_t off = pos_;
      ++pos_;
      NodePtr inner = parse_factor();
      if (c == '+') return inner;
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Unary;
      n->op = '-';
      n->a = std::move(inner);
      n->offset = off;
      n->length = 1;
      return n;
    }
    return parse_power();
  }

  // power := primary ('^' factor)?   (right associative, exponent may carry
  // a unary sign)
  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (peek() == '^') {
      const std::size_t off = pos_;
      ++pos_;
      return make_binary('^', std::move(base), parse_factor(), off);
    }
    return base;
  }

  NodePtr parse_primary() {
    const char c = peek();
    const std::size_t start = pos_;
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    throw ParseError(std::string("unexpected character '") + (c ? std::string(1, c) : "<eof>") +
                         "'",
                     start);
  }

  NodePtr parse_number() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.'))
      ++end;
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
      if (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) {
        while (e < src_.size() && std::isdigit(static_cast<unsigned char>(src_[e]))) ++e;
        end = e;
      }
    }
    const std::string text = src_.substr(start, end - start);
    try {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Const;
      n->value = std::stod(text);
      n->offset = start;
      n->length = end - start;
      pos_ = end;
      return n;
    } catch (...) {
      throw ParseError("malformed number '" + text + "'", start);
    }
  }

  NodePtr parse_ident() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[end])) ||
                                 src_[end] == '_'))
      ++end;
    const std::string ident = src_.substr(start, end - start);
    pos_ = end;

    if (is_func(ident)) {
      if (peek() != '(')
        throw ParseError("function '" + ident + "' requires an argument list", pos_);
      ++pos_;
      NodePtr arg = parse_expr();
      if (peek() != ')') throw ParseError("expected ')'", pos_);
      ++pos_;
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Call;
      n->func = ident;
      n->a = std::move(arg);
      n->offset = start;
      n->length = ident.size();
      return n;
    }

    auto var = std::make_shared<Node>();
    var->kind = Node::Kind::Var;
    var->offset = start;
    var->length = ident.size();
    if (ident == "t") {
      var->group = VarGroup::Time;
      return var;
    }
    if (ident.size() >= 2 && (ident[0] == 'x' || ident[0] == 'u' || ident[0] == 'p')) {
      bool all_digits = true;
      for (std::size_t i = 1; i < ident.size(); ++i)
        all_digits = all_digits && std::isdigit(static_cast<unsigned char>(ident[i]));
      if (all_digits) {
        const int idx = std::stoi(ident.substr(1));
        const int limit = ident[0] == 'x' ? dims_.state
                          : ident[0] == 'u' ? dims_.control
                                            : dims_.param;
        if (idx >= 1 && idx <= limit) {
          var->group = ident[0] == 'x'   ? VarGroup::State
                       : ident[0] == 'u' ? VarGroup::Control
                                         : VarGroup::Param;
          var->index = idx - 1;
          return var;
        }
      }
    }
    throw ParseError("unknown identifier '" + ident + "' (did you mean '" +
                         suggest(ident, dims_) + "'?)",
                     start);
  }
};

// ---- printing ----------------------------------------------------------

int precedence(const Node& n) {
  switch (n.kind) {
    case Node::Kind::Binary:
      if (n.op == '+' || n.op == '-') return 1;
      if (n.op == '*' || n.op == '/') return 2;
      return 4;  // '^'
    case Node::Kind::Unary:
      return 3;
    default:
      return 5;
  }
}

void print_node(const Node& n, std::ostringstream& os);

void print_child(const Node& child, int min_prec, std::ostringstream& os) {
  if (precedence(child) < min_prec) {
    os << '(';
    print_node(child, os);
    os << ')';
  } else {
    print_node(child, os);
  }
}

void print_node(const Node& n, std::ostringstream& os) {
  switch (n.kind) {
    case Node::Kind::Const: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", n.value);
      os << buf;
      break;
    }
    case Node::Kind::Var:
      switch (n.group) {
        case VarGroup::Time: os << 't'; break;
        case VarGroup::State: os << 'x' << (n.index + 1); break;
        case VarGroup::Control: os << 'u' << (n.index + 1); break;
        case VarGroup::Param: os << 'p' << (n.index + 1); break;
      }
      break;
    case Node::Kind::Unary:
      os << '-';
      print_child(*n.a, 3, os);
      break;
    case Node::Kind::Binary: {
      const int prec = precedence(n);
      if (n.op == '^') {
        print_child(*n.a, 5, os);
        os << '^';
        print_child(*n.b, 3, os);
      } else {
        print_child(*n.a, prec, os);
        os << n.op;
        print_child(*n.b, prec + 1, os);
      }
      break;
    }
    case Node::Kind::Call:
      os << n.func << '(';
      print_node(*n.a, os);
      os << ')';
      break;
  }
}

// ---- dual evaluation ----------------------------------------------------

struct D {
  double v = 0.0;
  RowVec g;  // width 0 when nothing is seeded
};

struct Ctx {
  const EvalPoint* pt;
  int width = 0;
  int time_at = -1, state_at = -1, control_at = -1, param_at = -1;
  bool abs_kink = false;
};

D eval_node(const Node& n, Ctx& ctx);

D make_const(double v, const Ctx& ctx) {
  D d;
  d.v = v;
  d.g = RowVec::Zero(ctx.width);
  return d;
}

bool const_integer_exponent(const Node& n, long& out) {
  if (n.kind != Node::Kind::Const) return false;
  const double r = std::nearbyint(n.value);
  if (r != n.value || std::abs(r) > 32) return false;
  out = static_cast<long>(r);
  return true;
}

D int_pow(const D& a, long k, const Node& n, const Ctx& ctx) {
  if (k == 0) return make_const(1.0, ctx);
  const bool neg = k < 0;
  const long m = neg ? -k : k;
  // value by repeated multiplication (exact for dyadic inputs), derivative
  // via k * a^(k-1) * a'.
  double v = 1.0;
  for (long i = 0; i < m; ++i) v *= a.v;
  double vm1 = 1.0;
  for (long i = 0; i + 1 < m; ++i) vm1 *= a.v;
  D out;
  if (neg) {
    if (a.v == 0.0) throw EvalError("zero raised to a negative power", n.offset, n.length);
    out.v = 1.0 / v;
    out.g = (-static_cast<double>(m) * vm1 / (v * v)) * a.g;
  } else {
    out.v = v;
    out.g = (static_cast<double>(m) * vm1) * a.g;
  }
  return out;
}

D eval_node(const Node& n, Ctx& ctx) {
  switch (n.kind) {
    case Node::Kind::Const:
      return make_const(n.value, ctx);
    case Node::Kind::Var: {
      D d;
      d.g = RowVec::Zero(ctx.width);
      switch (n.group) {
        case VarGroup::Time:
          d.v = ctx.pt->t;
          if (ctx.time_at >= 0) d.g[ctx.time_at] = 1.0;
          break;
        case VarGroup::State:
          d.v = ctx.pt->x[n.index];
          if (ctx.state_at >= 0) d.g[ctx.state_at + n.index] = 1.0;
          break;
        case VarGroup::Control:
          d.v = ctx.pt->u[n.index];
          if (ctx.control_at >= 0) d.g[ctx.control_at + n.index] = 1.0;
          break;
        case VarGroup::Param:
          d.v = ctx.pt->p[n.index];
          if (ctx.param_at >= 0) d.g[ctx.param_at + n.index] = 1.0;
          break;
      }
      return d;
    }
    case Node::Kind::Unary: {
      D a = eval_node(*n.a, ctx);
      a.v = -a.v;
      a.g = -a.g;
      return a;
    }
    case Node::Kind::Binary: {
      const D a = eval_node(*n.a, ctx);
      if (n.op == '^') {
        long k;
        if (const_integer_exponent(*n.b, k)) return int_pow(a, k, n, ctx);
        const D b = eval_node(*n.b, ctx);
        if (a.v <= 0.0)
          throw EvalError("non-integer power of a non-positive base", n.offset, n.length);
        D out;
        out.v = std::pow(a.v, b.v);
        out.g = out.v * (b.g * std::log(a.v) + (b.v / a.v) * a.g);
        return out;
      }
      const D b = eval_node(*n.b, ctx);
      D out;
      switch (n.op) {
        case '+':
          out.v = a.v + b.v;
          out.g = a.g + b.g;
          break;
        case '-':
          out.v = a.v - b.v;
          out.g = a.g - b.g;
          break;
        case '*':
          out.v = a.v * b.v;
          out.g = a.v * b.g + b.v * a.g;
          break;
        case '/':
          if (b.v == 0.0) throw EvalError("division by zero", n.offset, n.length);
          out.v = a.v / b.v;
          out.g = (a.g - out.v * b.g) / b.v;
          break;
        default:
          throw EvalError("internal: unknown operator", n.offset, n.length);
      }
      return out;
    }
    case Node::Kind::Call: {
      const D a = eval_node(*n.a, ctx);
      D out;
      if (n.func == "sin") {
        out.v = std::sin(a.v);
        out.g = std::cos(a.v) * a.g;
      } else if (n.func == "cos") {
        out.v = std::cos(a.v);
        out.g = -std::sin(a.v) * a.g;
      } else if (n.func == "exp") {
        out.v = std::exp(a.v);
        out.g = out.v * a.g;
      } else if (n.func == "log") {
        if (a.v <= 0.0) throw EvalError("log of a non-positive value", n.offset, n.length);
        out.v = std::log(a.v);
        out.g = a.g / a.v;
      } else if (n.func == "tanh") {
        out.v = std::tanh(a.v);
        out.g = (1.0 - out.v * out.v) * a.g;
      } else if (n.func == "sqrt") {
        if (a.v < 0.0) throw EvalError("sqrt of a negative value", n.offset, n.length);
        if (a.v == 0.0) throw EvalError("sqrt derivative at 0", n.offset, n.length);
        out.v = std::sqrt(a.v);
        out.g = (0.5 / out.v) * a.g;
      } else if (n.func == "abs") {
        out.v = std::abs(a.v);
        // Right derivative at the kink: sign(0) := +1.
        const double s = a.v >= 0.0 ? 1.0 : -1.0;
        if (a.v == 0.0) ctx.abs_kink = true;
        out.g = s * a.g;
      } else {
        throw EvalError("internal: unknown function", n.offset, n.length);
      }
      return out;
    }
  }
  throw EvalError("internal: unreachable", n.offset, n.length);
}

bool nodes_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::Const:
      return a.value == b.value;
    case Node::Kind::Var:
      return a.group == b.group && a.index == b.index;
    case Node::Kind::Unary:
      return a.op == b.op && nodes_equal(*a.a, *b.a);
    case Node::Kind::Binary:
      return a.op == b.op && nodes_equal(*a.a, *b.a) && nodes_equal(*a.b, *b.b);
    case Node::Kind::Call:
      return a.func == b.func && nodes_equal(*a.a, *b.a);
  }
  return false;
}

}  // namespace

Expr Expr::parse(const std::string& src, const Dims& dims) {
  Parser p(src, dims);
  return Expr(p.run(), dims);
}

std::string Expr::print() const {
  std::ostringstream os;
  print_node(*root_, os);
  return os.str();
}

double Expr::eval(const EvalPoint& pt) const {
  Ctx ctx;
  ctx.pt = &pt;
  ctx.width = 0;
  return eval_node(*root_, ctx).v;
}

DualResult Expr::eval_dual(const EvalPoint& pt, const SeedSet& seeds) const {
  Ctx ctx;
  ctx.pt = &pt;
  int at = 0;
  if (seeds.time) {
    ctx.time_at = at;
    at += 1;
  }
  if (seeds.state) {
    ctx.state_at = at;
    at += dims_.state;
  }
  if (seeds.control) {
    ctx.control_at = at;
    at += dims_.control;
  }
  if (seeds.param) {
    ctx.param_at = at;
    at += dims_.param;
  }
  ctx.width = at;
  const D d = eval_node(*root_, ctx);
  DualResult out;
  out.value = d.v;
  out.abs_kink = ctx.abs_kink;
  if (ctx.time_at >= 0) out.d_time = d.g[ctx.time_at];
  if (ctx.state_at >= 0) out.d_state = d.g.segment(ctx.state_at, dims_.state);
  if (ctx.control_at >= 0) out.d_control = d.g.segment(ctx.control_at, dims_.control);
  if (ctx.param_at >= 0) out.d_param = d.g.segment(ctx.param_at, dims_.param);
  return out;
}

bool Expr::structurally_equal(const Expr& other) const {
  return nodes_equal(*root_, *other.root_);
}

namespace {

bool node_uses_group(const Node& n, VarGroup g) {
  switch (n.kind) {
    case Node::Kind::Var:
      return n.group == g;
    case Node::Kind::Unary:
    case Node::Kind::Call:
      return node_uses_group(*n.a, g);
    case Node::Kind::Binary:
      return node_uses_group(*n.a, g) || node_uses_group(*n.b, g);
    default:
      return false;
  }
}

}  // namespace

bool Expr::uses_control_or_time() const {
  return node_uses_group(*root_, VarGroup::Control) || node_uses_group(*root_, VarGroup::Time);
}

BolzaProblem bind_problem(const ProblemExprs& exprs, const Dims& dims, double horizon,
                          const Vec& initial_state, const ControlBox& box,
                          const std::string& name) {
  if (static_cast<int>(exprs.f.size()) != dims.state)
    throw std::invalid_argument(name + ": need one dynamics expression per state component");

  auto parse_all = [&dims](const std::vector<std::string>& srcs) {
    std::vector<Expr> out;
    out.reserve(srcs.size());
    for (const auto& s : srcs) out.push_back(Expr::parse(s, dims));
    return out;
  };

  auto f0e = std::make_shared<const Expr>(Expr::parse(exprs.f0, dims));
  auto fe = std::make_shared<const std::vector<Expr>>(parse_all(exprs.f));
  std::vector<std::string> gsrc = exprs.g;
  if (gsrc.empty()) gsrc.push_back("0");
  auto ge = std::make_shared<const std::vector<Expr>>(parse_all(gsrc));
  auto he = std::make_shared<const std::vector<Expr>>(parse_all(exprs.h));
  for (const auto& e : *ge)
    if (e.uses_control_or_time())
      throw std::invalid_argument(name + ": terminal functions may only use x<i> and p<i>");
  for (const auto& e : *he)
    if (e.uses_control_or_time())
      throw std::invalid_argument(name + ": terminal functions may only use x<i> and p<i>");

  BolzaProblem P;
  P.name = name;
  P.state_dim = dims.state;
  P.control_dim = std::max(dims.control, 1);
  P.param_dim = dims.param;
  P.horizon = horizon;
  P.initial_state = initial_state;
  P.control_box = box;
  P.deriv_mode = DerivMode::DualAd;

  const auto point = [](double t, const Vec& x, const Vec& u, const Vec& p) {
    return EvalPoint{t, x, u, p};
  };

  P.f0 = [f0e, point](double t, const Vec& x, const Vec& u, const Vec& p) {
    return f0e->eval(point(t, x, u, p));
  };
  P.f = [fe, point](double t, const Vec& x, const Vec& u, const Vec& p) -> Vec {
    Vec out(fe->size());
    for (std::size_t i = 0; i < fe->size(); ++i) out[i] = (*fe)[i].eval(point(t, x, u, p));
    return out;
  };

  // One dual pass per slot; seeds pick the Jacobian block.
  const auto row_of = [point](const std::shared_ptr<const Expr>& e, SeedSet seeds, int which) {
    return [e, point, seeds, which](double t, const Vec& x, const Vec& u, const Vec& p) -> RowVec {
      const DualResult d = e->eval_dual(point(t, x, u, p), seeds);
      return which == 0 ? d.d_state : which == 1 ? d.d_control : d.d_param;
    };
  };
  P.f0_x = row_of(f0e, SeedSet{false, true, false, false}, 0);
  P.f0_u = row_of(f0e, SeedSet{false, false, true, false}, 1);
  P.f0_p = row_of(f0e, SeedSet{false, false, false, true}, 2);
  P.f0_t = [f0e, point](double t, const Vec& x, const Vec& u, const Vec& p) {
    return f0e->eval_dual(point(t, x, u, p), SeedSet{true, false, false, false}).d_time;
  };

  const auto jac_of = [point, fe](SeedSet seeds, int which, int cols) {
    return [fe, point, seeds, which, cols](double t, const Vec& x, const Vec& u,
                                           const Vec& p) -> Mat {
      Mat out(fe->size(), cols);
      for (std::size_t i = 0; i < fe->size(); ++i) {
        const DualResult d = (*fe)[i].eval_dual(point(t, x, u, p), seeds);
        out.row(i) = which == 0 ? d.d_state : which == 1 ? d.d_control : d.d_param;
      }
      return out;
    };
  };
  P.f_x = jac_of(SeedSet{false, true, false, false}, 0, dims.state);
  P.f_u = jac_of(SeedSet{false, false, true, false}, 1, std::max(dims.control, 1));
  P.f_p = jac_of(SeedSet{false, false, false, true}, 2, dims.param);
  P.f_t = [fe, point](double t, const Vec& x, const Vec& u, const Vec& p) -> Vec {
    Vec out(fe->size());
    for (std::size_t i = 0; i < fe->size(); ++i)
      out[i] = (*fe)[i].eval_dual(point(t, x, u, p), SeedSet{true, false, false, false}).d_time;
    return out;
  };

  const auto terminal_of = [point, dims](const std::shared_ptr<const std::vector<Expr>>& list,
                                         std::size_t idx) {
    TerminalFn out;
    const Vec u0 = Vec::Zero(std::max(dims.control, 1));
    out.value = [list, idx, point, u0](const Vec& xi, const Vec& pi) {
      return (*list)[idx].eval(point(0.0, xi, u0, pi));
    };
    out.grad_state = [list, idx, point, u0](const Vec& xi, const Vec& pi) -> RowVec {
      return (*list)[idx]
          .eval_dual(point(0.0, xi, u0, pi), SeedSet{false, true, false, false})
          .d_state;
    };
    out.grad_param = [list, idx, point, u0](const Vec& xi, const Vec& pi) -> RowVec {
      return (*list)[idx]
          .eval_dual(point(0.0, xi, u0, pi), SeedSet{false, false, false, true})
          .d_param;
    };
    return out;
  };
  for (std::size_t i = 0; i < ge->size(); ++i) P.g.push_back(terminal_of(ge, i));
  for (std::size_t i = 0; i < he->size(); ++i) P.h.push_back(terminal_of(he, i));

  P.finalize();
  return P;
}

}  // namespace octool::expr
