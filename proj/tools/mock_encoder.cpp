#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

// Stand-in encoder for tests and demos. Speaks the stdio adapter protocol:
// one {"id", "text"} request per line in, one {"id", "vector"} response per
// line out. Vectors are a deterministic hash of the text, so reruns and
// the --vectors path produce identical results.

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

int main(int argc, char** argv) {
    size_t dim = 8;
    if (argc > 1) {
        const long parsed = std::strtol(argv[1], nullptr, 10);
        if (parsed < 1) {
            std::cerr << "mock_encoder: dimension must be positive\n";
            return 1;
        }
        dim = static_cast<size_t>(parsed);
    }
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        const nlohmann::json request = nlohmann::json::parse(line, nullptr, false);
        if (request.is_discarded() || !request.contains("id") || !request.contains("text")) {
            std::cerr << "mock_encoder: malformed request line\n";
            return 1;
        }
        const uint64_t h = fnv1a(request["text"].get<std::string>());
        std::vector<double> vector(dim);
        for (size_t j = 0; j < dim; ++j) {
            const uint64_t z = splitmix64(h + j);
            vector[j] = static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
        }
        const nlohmann::json response{{"id", request["id"].get<std::string>()},
                                      {"vector", vector}};
        std::cout << response.dump() << "\n" << std::flush;
    }
    return 0;
}
