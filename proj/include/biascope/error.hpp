#pragma once

#include <stdexcept>
#include <string>

namespace biascope {

// Error kinds, grouped by how the CLI maps them to exit codes:
// config errors -> 2, data errors -> 3, numeric failures -> 4.
enum class errc {
    // config
    bad_config,
    missing_path,
    // data / parsing / validation
    io_failure,
    malformed_record,
    duplicate_id,
    unknown_source,
    negative_grade,
    unresolved_id,
    source_mismatch,
    duplicate_pair_member,
    bad_magic,
    truncated_file,
    dimension_mismatch,
    non_finite_value,
    unknown_id,
    missing_source_label,
    empty_ranking,
    no_judged_queries,
    empty_corpus,
    no_tokens,
    empty_query,
    empty_token_list,
    non_positive_ppl,
    invalid_rank,
    invalid_dim,
    out_of_range,
    index_out_of_range,
    too_few_displacements,
    zero_vector,
    empty_input,
    too_few_samples,
    // numeric
    all_zero_displacements,
    degenerate_variance,
    not_unit_direction,
    divergence_detected,
    non_convergence,
};

enum class error_class { config, data, numeric };

inline error_class classify(errc code) {
    switch (code) {
        case errc::bad_config:
        case errc::missing_path:
            return error_class::config;
        case errc::all_zero_displacements:
        case errc::degenerate_variance:
        case errc::not_unit_direction:
        case errc::divergence_detected:
        case errc::non_convergence:
            return error_class::numeric;
        default:
            return error_class::data;
    }
}

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) {
    throw Error(code, msg);
}

}  // namespace biascope
