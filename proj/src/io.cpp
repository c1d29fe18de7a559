#include "specdec/io.hpp"

#include <fstream>
#include <string>

namespace specdec {

using nlohmann::json;

namespace {

json matrix_json(const Matrix<double>& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix<double> matrix_from(const json& doc, const char* name) {
  const json& mats = doc.at("matrices");
  if (!mats.contains(name)) throw Error(Errc::ConfigError, std::string("checkpoint is missing matrix '") + name + "'");
  const json& m = mats.at(name);
  return Matrix<double>(m.at("rows").get<std::size_t>(), m.at("cols").get<std::size_t>(),
                        m.at("data").get<std::vector<double>>());
}

std::string kind_field(const json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) throw Error(Errc::ConfigError, "checkpoint has no 'kind'");
  return doc.at("kind").get<std::string>();
}

void expect(const json& doc, const char* field, std::size_t actual) {
  if (doc.contains(field) && doc.at(field).get<std::size_t>() != actual) {
    throw Error(Errc::ConfigError, std::string("checkpoint field '") + field + "' disagrees with its matrices");
  }
}

/// Wraps nlohmann errors (missing keys, wrong types) as ConfigError.
template <class F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace

json to_json(const DraftHead<double>& head) {
  const HeadShape shape = shape_of(head);
  json doc{{"kind", std::string(to_string(shape.kind))}, {"v", shape.v}, {"d", shape.d}};
  json mats = json::object();
  std::visit(
      [&](const auto& h) {
        using H = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<H, FullHead<double>>) {
          mats["weight"] = matrix_json(h.weight);
        } else if constexpr (std::is_same_v<H, SlimSpecHead<double>>) {
          doc["r"] = shape.r;
          mats["w_up"] = matrix_json(h.w_up);
          mats["w_down"] = matrix_json(h.w_down);
        } else if constexpr (std::is_same_v<H, TruncatedHead<double>>) {
          doc["v_tr"] = shape.v_tr;
          doc["index_map"] = h.index_map;
          mats["weight"] = matrix_json(h.weight);
        } else {
          doc["r"] = shape.r;
          doc["k"] = shape.k;
          mats["router_down"] = matrix_json(h.router_down);
          mats["router_up"] = matrix_json(h.router_up);
          mats["weight"] = matrix_json(h.weight);
        }
      },
      head);
  doc["matrices"] = std::move(mats);
  return doc;
}

DraftHead<double> head_from_json(const json& doc) {
  return guarded([&]() -> DraftHead<double> {
    const HeadKind kind = parse_head_kind(kind_field(doc));
    DraftHead<double> head = FullHead<double>{};
    switch (kind) {
      case HeadKind::Full:
        head = FullHead<double>{matrix_from(doc, "weight")};
        break;
      case HeadKind::SlimSpec:
        head = SlimSpecHead<double>{matrix_from(doc, "w_up"), matrix_from(doc, "w_down")};
        break;
      case HeadKind::Truncated: {
        const auto v = doc.at("v").get<std::size_t>();
        head = TruncatedHead<double>{matrix_from(doc, "weight"), doc.at("index_map").get<std::vector<TokenId>>(), v};
        break;
      }
      case HeadKind::Routed:
        head = RoutedHead<double>{matrix_from(doc, "router_down"), matrix_from(doc, "router_up"),
                                  matrix_from(doc, "weight"), doc.at("k").get<std::size_t>()};
        break;
    }
    validate(head);
    const HeadShape shape = shape_of(head);
    expect(doc, "v", shape.v);
    expect(doc, "d", shape.d);
    if (kind == HeadKind::SlimSpec || kind == HeadKind::Routed) expect(doc, "r", shape.r);
    if (kind == HeadKind::Truncated) expect(doc, "v_tr", shape.v_tr);
    return head;
  });
}

json to_json(const ToyTargetModel& model) {
  return json{{"kind", "toy_target"},
              {"v", model.vocab.size()},
              {"d", model.embed.cols()},
              {"d_h", model.mlp_w1.rows()},
              {"context_window", model.context_window},
              {"seed", model.seed},
              {"matrices",
               {{"embed", matrix_json(model.embed)},
                {"mlp_w1", matrix_json(model.mlp_w1)},
                {"mlp_w2", matrix_json(model.mlp_w2)}}}};
}

ToyTargetModel target_from_json(const json& doc) {
  return guarded([&] {
    if (kind_field(doc) != "toy_target") throw Error(Errc::ConfigError, "checkpoint is not a toy_target");
    ToyTargetModel model{Vocabulary(doc.at("v").get<std::int64_t>()),
                         matrix_from(doc, "embed"),
                         matrix_from(doc, "mlp_w1"),
                         matrix_from(doc, "mlp_w2"),
                         doc.at("context_window").get<std::size_t>(),
                         doc.value("seed", std::uint64_t{0})};
    validate(model);
    return model;
  });
}

json to_json(const DrafterBackbone& backbone) {
  return json{{"kind", "drafter_backbone"},
              {"v", backbone.vocab.size()},
              {"d", backbone.hidden_size()},
              {"context_window", backbone.context_window},
              {"seed", backbone.seed},
              {"matrices", {{"embed", matrix_json(backbone.embed)}, {"mix", matrix_json(backbone.mix)}}}};
}

DrafterBackbone backbone_from_json(const json& doc) {
  return guarded([&] {
    if (kind_field(doc) != "drafter_backbone") throw Error(Errc::ConfigError, "checkpoint is not a drafter_backbone");
    DrafterBackbone backbone{Vocabulary(doc.at("v").get<std::int64_t>()), matrix_from(doc, "embed"),
                             matrix_from(doc, "mix"), doc.at("context_window").get<std::size_t>(),
                             doc.value("seed", std::uint64_t{0})};
    validate(backbone);
    return backbone;
  });
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace specdec
