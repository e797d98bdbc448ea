#include "driftwatch/model_io.hpp"

#include <stdexcept>

namespace driftwatch {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json mlp_to_json(const Mlp& net) {
    ordered_json j;
    j["layers"] = ordered_json::array();
    for (const DenseLayer& layer : net.layers) {
        ordered_json lj;
        lj["in"] = layer.in_dim();
        lj["out"] = layer.out_dim();
        lj["activation"] = activation_name(layer.act);
        lj["weight"] = layer.weight.data;
        lj["bias"] = layer.bias;
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

Mlp mlp_from_json(const json& j) {
    Mlp net;
    for (const json& lj : j.at("layers")) {
        DenseLayer layer;
        const std::size_t in = lj.at("in").get<std::size_t>();
        const std::size_t out = lj.at("out").get<std::size_t>();
        layer.weight = Matrix(in, out);
        layer.weight.data = lj.at("weight").get<std::vector<double>>();
        layer.bias = lj.at("bias").get<std::vector<double>>();
        layer.act = activation_from_name(lj.at("activation").get<std::string>());
        if (layer.weight.data.size() != in * out)
            throw std::runtime_error("model: weight array length does not match declared dims");
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

ordered_json autoencoder_to_json(const Autoencoder& model) {
    ordered_json j;
    j["role"] = "scd";
    j["format_version"] = kModelFormatVersion;
    j["encoder"] = mlp_to_json(model.encoder);
    j["decoder"] = mlp_to_json(model.decoder);
    return j;
}

Autoencoder autoencoder_from_json(const json& j) {
    Autoencoder model;
    model.encoder = mlp_from_json(j.at("encoder"));
    model.decoder = mlp_from_json(j.at("decoder"));
    if (model.encoder.output_dim() != model.decoder.input_dim())
        throw std::runtime_error("model: encoder/decoder latent dims disagree");
    if (model.encoder.input_dim() != model.decoder.output_dim())
        throw std::runtime_error("model: encoder input and decoder output dims disagree");
    return model;
}

ordered_json classifier_to_json(const EvidentialClassifier& clf) {
    ordered_json j;
    j["role"] = "iec";
    j["format_version"] = kModelFormatVersion;
    j["net"] = mlp_to_json(clf.net);
    return j;
}

EvidentialClassifier classifier_from_json(const json& j) {
    EvidentialClassifier clf;
    clf.net = mlp_from_json(j.at("net"));
    if (clf.net.output_dim() != 2) throw std::runtime_error("model: IEC output dim must be 2");
    return clf;
}

ordered_json hypernetwork_to_json(const Hypernetwork& h) {
    ordered_json j;
    j["role"] = "dsd";
    j["format_version"] = kModelFormatVersion;
    j["targets"] = shift_targets_name(h.targets);
    j["embed_dim"] = h.embed_dim;
    j["shared_encoder"] = mlp_to_json(h.shared_encoder);
    j["target_map"] = ordered_json::array();
    for (const ShiftTargetRef& ref : h.target_map)
        j["target_map"].push_back({{"encoder", ref.in_encoder},
                                   {"layer", ref.layer},
                                   {"rows", ref.rows},
                                   {"cols", ref.cols}});
    j["heads"] = ordered_json::array();
    for (const LinearHead& head : h.heads)
        j["heads"].push_back({{"rows", head.weight.rows},
                              {"cols", head.weight.cols},
                              {"weight", head.weight.data},
                              {"bias", head.bias}});
    j["generators"] = ordered_json::array();
    for (const ShiftGenerator& g : h.generators)
        j["generators"].push_back({{"rows", g.b2.rows},
                                   {"cols", g.b2.cols},
                                   {"w1", g.w1.data},
                                   {"b1", g.b1},
                                   {"w2", g.w2},
                                   {"b2", g.b2.data},
                                   {"bbar", g.bbar.data}});
    return j;
}

Hypernetwork hypernetwork_from_json(const json& j, const Autoencoder& target) {
    Hypernetwork h;
    h.targets = shift_targets_from_name(j.at("targets").get<std::string>());
    h.embed_dim = j.at("embed_dim").get<std::size_t>();
    h.shared_encoder = mlp_from_json(j.at("shared_encoder"));

    for (const json& rj : j.at("target_map")) {
        ShiftTargetRef ref;
        ref.in_encoder = rj.at("encoder").get<bool>();
        ref.layer = rj.at("layer").get<std::size_t>();
        ref.rows = rj.at("rows").get<std::size_t>();
        ref.cols = rj.at("cols").get<std::size_t>();
        const Mlp& net = ref.in_encoder ? target.encoder : target.decoder;
        if (ref.layer >= net.layers.size())
            throw std::runtime_error("model: hypernetwork targets layer " + std::to_string(ref.layer) +
                                     " beyond autoencoder depth");
        const Matrix& w = net.layers[ref.layer].weight;
        if (w.rows != ref.rows || w.cols != ref.cols)
            throw std::runtime_error("model: hypernetwork shape manifest " + std::to_string(ref.rows) +
                                     "x" + std::to_string(ref.cols) + " does not match autoencoder layer " +
                                     shape_str(w));
        h.target_map.push_back(ref);
    }

    for (const json& hj : j.at("heads")) {
        LinearHead head;
        head.weight = Matrix(hj.at("rows").get<std::size_t>(), hj.at("cols").get<std::size_t>());
        head.weight.data = hj.at("weight").get<std::vector<double>>();
        head.bias = hj.at("bias").get<std::vector<double>>();
        if (head.weight.data.size() != head.weight.rows * head.weight.cols)
            throw std::runtime_error("model: head weight length mismatch");
        h.heads.push_back(std::move(head));
    }
    for (const json& gj : j.at("generators")) {
        ShiftGenerator g;
        const std::size_t rows = gj.at("rows").get<std::size_t>();
        const std::size_t cols = gj.at("cols").get<std::size_t>();
        g.w1 = Matrix(rows, h.embed_dim);
        g.w1.data = gj.at("w1").get<std::vector<double>>();
        g.b1 = gj.at("b1").get<std::vector<double>>();
        g.w2 = gj.at("w2").get<std::vector<double>>();
        g.b2 = Matrix(rows, cols);
        g.b2.data = gj.at("b2").get<std::vector<double>>();
        g.bbar = Matrix(rows, cols);
        g.bbar.data = gj.at("bbar").get<std::vector<double>>();
        if (g.w1.data.size() != rows * h.embed_dim || g.b1.size() != rows || g.w2.size() != cols ||
            g.b2.data.size() != rows * cols || g.bbar.data.size() != rows * cols)
            throw std::runtime_error("model: generator block length mismatch");
        h.generators.push_back(std::move(g));
    }
    if (h.heads.size() != h.target_map.size() || h.generators.size() != h.target_map.size())
        throw std::runtime_error("model: hypernetwork head/generator count mismatch");
    return h;
}

}  // namespace driftwatch
