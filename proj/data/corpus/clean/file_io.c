#include <stdio.h>

int count_lines(const char *path) {
  file *f = fopen(path, "r");
  if (f == 0) {
    return -1;
  }
  int lines = 0;
  int c;
  while ((c = fgetc(f)) != -1) {
    if (c == '\n') {
      lines++;
    }
  }
  fclose(f);
  return lines;
}

int copy_file(const char *from, const char *to) {
  file *in = fopen(from, "rb");
  if (in == 0) {
    return -1;
  }
  file *out = fopen(to, "wb");
  if (out == 0) {
    fclose(in);
    return -1;
  }
  char buffer[4096];
  size_t n;
  while ((n = fread(buffer, 1, sizeof(buffer), in)) > 0) {
    fwrite(buffer, 1, n, out);
  }
  fclose(in);
  fclose(out);
  return 0;
}
