#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace psfdeconv::onnx {

// Dense float32 tensor (int64 tensors appear only inside shape arithmetic).
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t numel() const noexcept;
};

struct ValueSpec {
    std::string name;
    int elem_type = 0;
    // -1 marks a symbolic dimension.
    std::vector<std::int64_t> dims;
};

// Minimal CPU interpreter for feed-forward ONNX inference graphs
// (convolutional regressors and MLPs). run() is const and reentrant.
class Graph {
public:
    static Graph load(const std::filesystem::path& path);
    static Graph parse(const std::string& bytes, const std::string& origin = "<memory>");

    Graph(Graph&&) noexcept;
    Graph& operator=(Graph&&) noexcept;
    ~Graph();

    const std::vector<ValueSpec>& inputs() const noexcept;
    const std::vector<ValueSpec>& outputs() const noexcept;
    std::vector<std::string> op_types() const;

    // Feeds `input` to the single graph input and returns the first output.
    Tensor run(const Tensor& input) const;

private:
    struct Impl;
    explicit Graph(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace psfdeconv::onnx
