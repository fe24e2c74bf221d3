#include <stddef.h>

size_t str_length(const char *s) {
  size_t n = 0;
  while (s[n] != '\0') {
    n++;
  }
  return n;
}

void str_reverse(char *s) {
  size_t n = str_length(s);
  for (size_t i = 0; i < n / 2; i++) {
    char tmp = s[i];
    s[i] = s[n - 1 - i];
    s[n - 1 - i] = tmp;
  }
}

int str_equal(const char *a, const char *b) {
  while (*a != '\0' && *a == *b) {
    a++;
    b++;
  }
  return *a == *b;
}

int is_digit(char c) {
  return c >= '0' && c <= '9';
}

int parse_int(const char *s) {
  int sign = 1;
  int value = 0;
  if (*s == '-') {
    sign = -1;
    s++;
  }
  while (is_digit(*s)) {
    value = value * 10 + (*s - '0');
    s++;
  }
  return sign * value;
}
