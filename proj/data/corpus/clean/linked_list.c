#include <stdlib.h>

struct node {
  int value;
  struct node *next;
};

struct node *list_push(struct node *head, int value) {
  struct node *n = malloc(sizeof(struct node));
  if (n == 0) {
    return head;
  }
  n->value = value;
  n->next = head;
  return n;
}

int list_length(const struct node *head) {
  int count = 0;
  while (head != 0) {
    count++;
    head = head->next;
  }
  return count;
}

void list_free(struct node *head) {
  while (head != 0) {
    struct node *next = head->next;
    free(head);
    head = next;
  }
}

struct node *list_reverse(struct node *head) {
  struct node *prev = 0;
  while (head != 0) {
    struct node *next = head->next;
    head->next = prev;
    prev = head;
    head = next;
  }
  return prev;
}
