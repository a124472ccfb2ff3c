#include "spkdnn/model_io.hpp"

#include "text_io.hpp"

#include <ostream>

namespace spkdnn {

namespace {

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i) text::write_row(os, m.row(i));
}

void expect_tokens(text::LineReader& r, std::initializer_list<std::string_view> tokens) {
  auto f = r.expect();
  bool ok = f.size() == tokens.size();
  std::size_t i = 0;
  for (auto t : tokens) ok = ok && f[i++] == t;
  if (!ok) {
    std::string want;
    for (auto t : tokens) want += (want.empty() ? "" : " ") + std::string(t);
    r.fail("expected '" + want + "'");
  }
}

Index expect_count(text::LineReader& r, std::string_view f) {
  Index v = 0;
  if (!text::parse_int(f, v) || v < 1) r.fail("expected a positive count, got '" + std::string(f) + "'");
  return v;
}

RbmParams<double> read_rbm(text::LineReader& r) {
  expect_tokens(r, {"RBM", "v1"});
  RbmParams<double> p;
  auto kind = r.expect();
  if (kind.size() == 1 && kind[0] == "gaussian")
    p.visible_kind = VisibleKind::gaussian;
  else if (kind.size() == 1 && kind[0] == "bernoulli")
    p.visible_kind = VisibleKind::bernoulli;
  else
    r.fail("expected visible kind 'gaussian' or 'bernoulli'");
  auto dims = r.expect();
  if (dims.size() != 2) r.fail("expected '<n_visible> <n_hidden>'");
  const Index nv = expect_count(r, dims[0]);
  const Index nh = expect_count(r, dims[1]);
  p.visible_bias = r.expect_vector(nv);
  p.hidden_bias = r.expect_vector(nh);
  p.weights = r.expect_matrix(nv, nh);
  return p;
}

DbnParams<double> read_dbn(text::LineReader& r) {
  expect_tokens(r, {"DBN", "v1"});
  DbnParams<double> dbn;
  auto f = r.expect();
  if (f.size() != 2 || f[0] != "normalized" || (f[1] != "0" && f[1] != "1")) r.fail("expected 'normalized <0|1>'");
  dbn.normalized = f[1] == "1";
  f = r.expect();
  if (f.size() != 2 || f[0] != "layers") r.fail("expected 'layers <count>'");
  const Index n = expect_count(r, f[1]);
  for (Index k = 0; k < n; ++k) dbn.layers.push_back(read_rbm(r));
  try {
    check_chain(dbn);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return dbn;
}

DnnModel<double> read_dnn(text::LineReader& r) {
  expect_tokens(r, {"DNN", "v1"});
  auto f = r.expect();
  if (f.size() < 4 || f[0] != "sizes") r.fail("expected 'sizes <input> <hidden>... 2'");
  std::vector<Index> sizes;
  for (std::size_t i = 1; i < f.size(); ++i) sizes.push_back(expect_count(r, f[i]));
  if (sizes.back() != 2) r.fail("output layer must have 2 units");
  const std::size_t n_layers = sizes.size() - 1;
  f = r.expect();
  if (f.size() != n_layers + 1 || f[0] != "activations") r.fail("expected one activation tag per layer");
  for (std::size_t i = 1; i < f.size(); ++i) {
    const bool last = i == n_layers;
    if (f[i] != (last ? "softmax" : "sigmoid"))
      r.fail("unsupported activation '" + std::string(f[i]) + "' for layer " + std::to_string(i));
  }
  DnnModel<double> m;
  for (std::size_t l = 0; l < n_layers; ++l) {
    f = r.expect();
    if (f.size() != 4 || f[0] != "layer") r.fail("expected 'layer <index> <n_in> <n_out>'");
    const Index n_in = expect_count(r, f[2]);
    const Index n_out = expect_count(r, f[3]);
    if (n_in != sizes[l] || n_out != sizes[l + 1]) r.fail("layer shape does not match 'sizes'");
    DenseLayer<double> layer;
    layer.weights = r.expect_matrix(n_in, n_out);
    layer.bias = r.expect_vector(n_out);
    if (l + 1 < n_layers)
      m.hidden.push_back(std::move(layer));
    else
      m.output = std::move(layer);
  }
  return m;
}

template <typename T, typename Reader>
T load_with(const std::filesystem::path& path, Reader read) {
  auto is = text::open_in(path);
  text::LineReader r(is, path.string());
  T value = read(r);
  std::vector<std::string_view> extra;
  if (r.next(extra)) r.fail("trailing content");
  return value;
}

template <typename T, typename Writer>
void save_with(const T& value, const std::filesystem::path& path, Writer write) {
  auto os = text::open_out(path);
  write(os, value);
  text::finish(os, path);
}

}  // namespace

void write_rbm(std::ostream& os, const RbmParams<double>& rbm) {
  os << "RBM v1\n" << to_string(rbm.visible_kind) << '\n' << rbm.n_visible() << ' ' << rbm.n_hidden() << '\n';
  text::write_row(os, rbm.visible_bias);
  text::write_row(os, rbm.hidden_bias);
  write_matrix(os, rbm.weights);
}

void write_dbn(std::ostream& os, const DbnParams<double>& dbn) {
  os << "DBN v1\nnormalized " << (dbn.normalized ? 1 : 0) << "\nlayers " << dbn.layers.size() << '\n';
  for (const auto& l : dbn.layers) write_rbm(os, l);
}

void write_dnn(std::ostream& os, const DnnModel<double>& model) {
  os << "DNN v1\nsizes";
  for (auto s : model.layer_sizes()) os << ' ' << s;
  os << "\nactivations";
  for (std::size_t i = 0; i < model.hidden.size(); ++i) os << " sigmoid";
  os << " softmax\n";
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layer(l);
    os << "layer " << l + 1 << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << '\n';
    write_matrix(os, layer.weights);
    text::write_row(os, layer.bias);
  }
}

void save_rbm(const RbmParams<double>& rbm, const std::filesystem::path& path) { save_with(rbm, path, write_rbm); }
void save_dbn(const DbnParams<double>& dbn, const std::filesystem::path& path) { save_with(dbn, path, write_dbn); }
void save_dnn(const DnnModel<double>& model, const std::filesystem::path& path) { save_with(model, path, write_dnn); }

RbmParams<double> load_rbm(const std::filesystem::path& path) { return load_with<RbmParams<double>>(path, read_rbm); }
DbnParams<double> load_dbn(const std::filesystem::path& path) { return load_with<DbnParams<double>>(path, read_dbn); }
DnnModel<double> load_dnn(const std::filesystem::path& path) { return load_with<DnnModel<double>>(path, read_dnn); }

}  // namespace spkdnn
