int find_index(int *a, int n, int key)
{
    int i;
    if (n > 16)
        n = 16;
    for (i = 0; i < n; i++) {
        if (a[i] == key)
            break;
    }
    if (i == n)
        return -1;
    return i;
}
