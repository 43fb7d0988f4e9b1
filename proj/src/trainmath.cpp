#include "twinforge/trainmath.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "twinforge/digest.hpp"
#include "twinforge/text.hpp"

namespace twinforge::trainmath {

std::vector<LogProbSequence> parse_logprob_jsonl(std::string_view text_in) {
    struct Acc {
        std::vector<double> lp;
        std::vector<bool> mask;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> tokens;
    std::vector<LogProbSequence> whole;
    std::size_t offset = 0, line_no = 0;
    auto build = [](const std::vector<double>& lp, const std::vector<bool>& mask) {
        LogProbSequence s;
        s.logprobs.resize(static_cast<Eigen::Index>(lp.size()));
        s.output_mask.resize(static_cast<Eigen::Index>(lp.size()));
        for (std::size_t i = 0; i < lp.size(); ++i) {
            s.logprobs(static_cast<Eigen::Index>(i)) = lp[i];
            s.output_mask(static_cast<Eigen::Index>(i)) = mask.empty() ? true : static_cast<bool>(mask[i]);
        }
        s.validate();
        return s;
    };
    for (const auto& line : text::split_lines(text_in)) {
        ++line_no;
        const std::size_t here = offset;
        offset += line.size() + 1;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("logprob line " + std::to_string(line_no) + ": " + e.what(), here + e.byte);
        }
        try {
            if (j.contains("logprobs")) {
                const auto lp = j.at("logprobs").get<std::vector<double>>();
                std::vector<bool> mask;
                if (j.contains("mask")) mask = j.at("mask").get<std::vector<bool>>();
                if (!mask.empty() && mask.size() != lp.size()) {
                    throw ShapeError("line " + std::to_string(line_no) + ": mask length differs from logprobs");
                }
                whole.push_back(build(lp, mask));
            } else {
                const std::string seq = j.contains("seq") ? j["seq"].dump() : "0";
                if (!tokens.count(seq)) order.push_back(seq);
                auto& acc = tokens[seq];
                acc.lp.push_back(j.at("logprob").get<double>());
                acc.mask.push_back(j.value("mask", true));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("logprob line " + std::to_string(line_no) + ": " + e.what(), here);
        }
    }
    for (const auto& id : order) whole.push_back(build(tokens[id].lp, tokens[id].mask));
    return whole;
}

std::vector<LogProbSequence> read_logprob_jsonl(const std::filesystem::path& path) {
    return parse_logprob_jsonl(read_file(path));
}

Matrix<double> parse_matrix(std::string_view text_in) {
    std::istringstream in{std::string(text_in)};
    std::string header;
    while (std::getline(in, header) && (text::trim(header).empty() || text::trim(header)[0] == '#')) {
    }
    long rows = -1, cols = -1;
    std::istringstream hs(header);
    if (!(hs >> rows >> cols) || rows < 0 || cols < 0) throw ParseError("matrix header must be 'rows cols'", 0);
    Matrix<double> m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
            std::string tok;
            if (!(in >> tok)) throw ShapeError("matrix has fewer than " + std::to_string(rows * cols) + " entries");
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size()) throw ParseError("bad matrix entry '" + tok + "'", 0);
            m(r, c) = v;
        }
    }
    std::string extra;
    if (in >> extra) throw ShapeError("matrix has more entries than its header declares");
    if (!m.allFinite()) throw Error("matrix entries must be finite");
    return m;
}

Matrix<double> read_matrix(const std::filesystem::path& path) { return parse_matrix(read_file(path)); }

std::string format_matrix(const Matrix<double>& m) {
    std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    char buf[40];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            if (c) out += ' ';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix<double>& m) {
    write_file_atomic(path, format_matrix(m));
}

nlohmann::json training_config_json(const TrainingConfig& c) {
    c.schedule.validate();
    nlohmann::json j = {{"objective", c.objective},
                        {"schedule",
                         {{"warmup", "linear"},
                          {"decay", "cosine_to_floor"},
                          {"total_steps", c.schedule.total_steps},
                          {"warmup_steps", c.schedule.warmup_steps},
                          {"peak_lr", c.schedule.peak_lr},
                          {"floor_fraction", c.schedule.floor_fraction}}}};
    if (c.lora_rank) {
        j["lora"] = {{"rank", *c.lora_rank}, {"scale", c.lora_scale}};
    } else {
        j["lora"] = nullptr;
    }
    return j;
}

}  // namespace twinforge::trainmath
