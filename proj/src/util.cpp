#include "parkcast/util.hpp"

#include <openssl/evp.h>

#include <array>
#include <cassert>
#include <charconv>
#include <stdexcept>

namespace parkcast {

std::string sha256_hex(std::string_view bytes)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    // splitmix64 finalizer over the combined key
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::string format_double(double v)
{
    if (std::isnan(v))
        return "";
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    assert(ec == std::errc{});
    return std::string(buf.data(), ptr);
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line)
{
    std::vector<std::string_view> fields;
    line = trim(line);
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(pos)));
            break;
        }
        fields.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return fields;
}

void Matrix::append_row(std::span<const double> values)
{
    if (rows == 0 && cols == 0)
        cols = values.size();
    if (values.size() != cols)
        throw std::invalid_argument("row width mismatch");
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const
{
    Matrix out(indices.size(), cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> indices) const
{
    Matrix out(rows, indices.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < indices.size(); ++j)
            out(r, j) = (*this)(r, indices[j]);
    return out;
}

}  // namespace parkcast
