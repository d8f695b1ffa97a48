/*
 * Copyright 2026 The ehrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ehrx/error.hpp"

namespace ehrx::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the row starts
  std::vector<std::string> cells;
};

struct Document {
  std::vector<std::string> header;
  std::vector<Row> rows;
};

// RFC 4180 reader: comma separator, double-quote escaping, LF or CRLF line
// endings, embedded newlines inside quoted cells. Blank lines are skipped.
inline Document read(std::istream& in, std::string_view source_name) {
  Document doc;
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);

  std::vector<Row> records;
  Row current;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_row = [&] {
    if (row_has_content || !current.cells.empty() || !cell.empty()) {
      current.cells.push_back(std::move(cell));
      records.push_back(std::move(current));
    }
    cell.clear();
    current = Row{};
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        current.cells.push_back(std::move(cell));
        cell.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        current.line = line;
        break;
      default:
        cell.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) {
    fail(ErrorCode::kDataLoss,
         std::string(source_name) + ":" + std::to_string(current.line) +
             ": unterminated quoted cell");
  }
  end_row();

  if (records.empty()) {
    fail(ErrorCode::kDataLoss, std::string(source_name) + ": missing header row");
  }
  doc.header = std::move(records.front().cells);
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].cells.size() != doc.header.size()) {
      fail(ErrorCode::kDataLoss,
           std::string(source_name) + ":" + std::to_string(records[i].line) +
               ": expected " + std::to_string(doc.header.size()) +
               " cells, found " + std::to_string(records[i].cells.size()));
    }
    doc.rows.push_back(std::move(records[i]));
  }
  return doc;
}

inline void write_cell(std::ostream& out, std::string_view cell) {
  if (cell.find_first_of(",\"\n\r") == std::string_view::npos) {
    out << cell;
    return;
  }
  out << '"';
  for (char c : cell) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out << ',';
    write_cell(out, cells[i]);
  }
  out << '\n';
}

}  // namespace ehrx::csv
