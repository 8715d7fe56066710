#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eirehn/errors.hpp"
#include "eirehn/tape.hpp"
#include "eirehn/tensor.hpp"

namespace eirehn {

// One windowed inertial recording: signal is [T_w x C] with channels in
// the fixed loader order, label in [0, 6).
struct HarSample {
    Tensor signal;
    int label = 0;
};

struct HarData {
    std::vector<HarSample> train, test;
    int window = 0;    // T_w
    int channels = 0;  // C
};

namespace har_detail {

// Channel order: body acc xyz, gyro xyz, total acc xyz.
inline const std::array<std::string, 9>& channel_names() {
    static const std::array<std::string, 9> names = {
        "body_acc_x", "body_acc_y", "body_acc_z",
        "body_gyro_x", "body_gyro_y", "body_gyro_z",
        "total_acc_x", "total_acc_y", "total_acc_z"};
    return names;
}

inline std::vector<std::vector<double>> read_signal_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("har: missing file '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<int> read_labels(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("har: missing file '" + path + "'");
    std::vector<int> out;
    int v;
    while (is >> v) out.push_back(v);
    return out;
}

inline std::vector<HarSample> load_split(const std::string& root, const std::string& split) {
    const std::string sig_dir = root + "/" + split + "/Inertial Signals/";
    std::vector<std::vector<std::vector<double>>> channels;
    for (const std::string& ch : channel_names())
        channels.push_back(read_signal_file(sig_dir + ch + "_" + split + ".txt"));
    std::vector<int> labels = read_labels(root + "/" + split + "/y_" + split + ".txt");

    size_t n = channels[0].size();
    if (n == 0) throw DataError("har: empty split '" + split + "'");
    size_t window = channels[0][0].size();
    for (size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].size() != n)
            throw DataError("har: row count mismatch in channel " + channel_names()[c] +
                            " (" + std::to_string(channels[c].size()) + " vs " +
                            std::to_string(n) + ")");
        for (const auto& row : channels[c])
            if (row.size() != window)
                throw DataError("har: ragged rows in channel " + channel_names()[c]);
    }
    if (labels.size() != n)
        throw DataError("har: label count " + std::to_string(labels.size()) +
                        " does not match " + std::to_string(n) + " signal rows");

    std::vector<HarSample> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        HarSample s;
        s.signal = Tensor({static_cast<int>(window), static_cast<int>(channels.size())});
        for (size_t c = 0; c < channels.size(); ++c)
            for (size_t t = 0; t < window; ++t)
                s.signal.at(static_cast<int>(t), static_cast<int>(c)) = channels[c][i][t];
        if (labels[i] < 1 || labels[i] > 6)
            throw DataError("har: label " + std::to_string(labels[i]) + " out of range 1..6");
        s.label = labels[i] - 1;  // published labels are 1-based
        if (!s.signal.all_finite())
            throw DataError("har: non-finite signal value in sample " + std::to_string(i));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace har_detail

// Loads the published smartphone-inertial layout:
//   <root>/{train,test}/Inertial Signals/<channel>_{train,test}.txt
//   <root>/{train,test}/y_{train,test}.txt
inline HarData load_har(const std::string& root) {
    HarData data;
    data.train = har_detail::load_split(root, "train");
    data.test = har_detail::load_split(root, "test");
    data.window = data.train[0].signal.rows();
    data.channels = data.train[0].signal.cols();
    if (data.test[0].signal.rows() != data.window ||
        data.test[0].signal.cols() != data.channels)
        throw DataError("har: train/test window or channel mismatch");
    return data;
}

struct HarNormalization {
    Tensor mean;  // [C]
    Tensor std;   // [C]
};

// Per-channel standardization with statistics from the training split only.
inline HarNormalization standardize(HarData& data) {
    int c_count = data.channels;
    Tensor mean({c_count}), var({c_count});
    size_t n = 0;
    for (const HarSample& s : data.train) {
        for (int t = 0; t < data.window; ++t)
            for (int c = 0; c < c_count; ++c) mean[c] += s.signal.at(t, c);
        n += data.window;
    }
    for (int c = 0; c < c_count; ++c) mean[c] /= static_cast<double>(n);
    for (const HarSample& s : data.train)
        for (int t = 0; t < data.window; ++t)
            for (int c = 0; c < c_count; ++c) {
                double d = s.signal.at(t, c) - mean[c];
                var[c] += d * d;
            }
    Tensor stddev({c_count});
    for (int c = 0; c < c_count; ++c)
        stddev[c] = std::max(std::sqrt(var[c] / static_cast<double>(n)), 1e-12);

    auto apply = [&](std::vector<HarSample>& split) {
        for (HarSample& s : split)
            for (int t = 0; t < data.window; ++t)
                for (int c = 0; c < c_count; ++c)
                    s.signal.at(t, c) = (s.signal.at(t, c) - mean[c]) / stddev[c];
    };
    apply(data.train);
    apply(data.test);
    return {mean, stddev};
}

// Six-class readout on the last hidden state; softmax lives in the loss.
inline Value classify_head(Tape& tape, Value h_last, Value w_c, Value b_c) {
    return tape.add(tape.matmul(w_c, h_last), b_c);
}

}  // namespace eirehn
