// Stand-alone transcoder honoring the external-transcoder contract:
//   mseva-transcode <input> <out.wav> <out.avi> <dst_w> <dst_h>
// Useful as a template for wrapping other transcoders via MSEVA_TRANSCODER.

#include <iostream>
#include <string>

#include "mseva/common/error.hpp"
#include "mseva/media/normalize.hpp"

int main(int argc, char** argv) {
  if (argc != 6) {
    std::cerr << "usage: " << argv[0] << " <input> <out.wav> <out.avi> <dst_w> <dst_h>\n";
    return 2;
  }
  try {
    mseva::media::LibavTranscoder t;
    t.transcode(argv[1], argv[2], argv[3], std::stoi(argv[4]), std::stoi(argv[5]));
  } catch (const std::exception& e) {
    std::cerr << "mseva-transcode: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
